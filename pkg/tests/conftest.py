import warnings

import numpy as np
import pytest

from pepkit.data import synth_blobs
from pepkit.nn import NetworkSpec, ParamVector, gradient
from pepkit.presets import overtrained_blobs
from pepkit.train import train


@pytest.fixture(scope="session")
def overtrained():
    """Seed-0 over-trained blobs experiment and its 60-epoch checkpoint series."""
    ex = overtrained_blobs(0)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        series = train(ex.spec, ex.data, ex.train)
    return ex, series


def fit_logistic(seed=2):
    """4-input, 2-class logistic model (10 parameters) fitted to 20 blob points.

    Full-batch gradient ascent drives the gradient to ~1e-15, so the model sits
    at its maximum-likelihood point.
    """
    data = synth_blobs(2, 10, 4, 2.0, seed)
    spec = NetworkSpec.from_widths([4, 2])
    theta = np.zeros(spec.param_count)
    for _ in range(5000):
        theta += 0.5 * gradient(spec, ParamVector(theta, spec.layout()), data.features,
                                data.labels).values / len(data)
    return spec, ParamVector(theta, spec.layout()), data


@pytest.fixture(scope="session")
def logistic10():
    return fit_logistic()
