import math

import numpy as np
import pytest

from pepkit.errors import ConfigError
from pepkit.nn import softmax
from pepkit.temperature import fit_temperature, scale_logits


def calibrated_logits(n=5000, k=5, seed=0):
    """Logits with labels drawn from their own softmax, so T=1 is the true temperature."""
    g = np.random.default_rng(seed)
    z = g.normal(0, 2.0, (n, k))
    p = softmax(z)
    labels = (g.random(n)[:, None] > np.cumsum(p, axis=1)).sum(axis=1)
    return z, labels


class TestScale:
    def test_identity(self):
        z = np.random.default_rng(0).normal(size=(4, 3))
        assert scale_logits(z, 1.0).tobytes() == softmax(z).tobytes()

    def test_flattening(self):
        np.testing.assert_allclose(scale_logits([[5.0, -3.0, 1.0]], 1e9), 1 / 3, atol=1e-6)

    def test_closed_form(self):
        e = math.e
        np.testing.assert_allclose(scale_logits([[2.0, 0.0]], 2.0), [[e / (e + 1), 1 / (e + 1)]],
                                   rtol=0, atol=1e-15)

    @pytest.mark.parametrize("t", [0.0, -1.0])
    def test_domain(self, t):
        with pytest.raises(ConfigError):
            scale_logits([[1.0, 0.0]], t)

    @pytest.mark.parametrize("t", [0.1, 1.0, 10.0])
    def test_argmax_invariant(self, t):
        z = np.random.default_rng(2).normal(size=(200, 6))
        assert np.array_equal(scale_logits(z, t).argmax(1), z.argmax(1))


class TestFit:
    def test_recovers_generating_temperature(self):
        z, y = calibrated_logits()
        fit = fit_temperature(2.0 * z, y)
        assert 1.9 <= fit.t_star <= 2.1
        assert fit.nll_after <= fit.nll_before

    def test_ml_fitted_model_near_one(self):
        from pepkit.data import synth_blobs
        from pepkit.nn import NetworkSpec, ParamVector, forward, gradient
        data = synth_blobs(3, 60, 2, 1.5, 4)
        spec = NetworkSpec.from_widths([2, 3])
        theta = np.zeros(spec.param_count)
        for _ in range(3000):
            theta += 0.5 * gradient(spec, ParamVector(theta, spec.layout()), data.features,
                                    data.labels).values / len(data)
        fit = fit_temperature(forward(spec, ParamVector(theta, spec.layout()), data.features), data.labels)
        assert 0.8 <= fit.t_star <= 1.25

    def test_one_sample_hits_edge(self):
        with pytest.warns(RuntimeWarning, match="bracket edge"):
            fit = fit_temperature([[2.0, 0.0]], [0])
        assert fit.at_bracket_edge and fit.t_star == pytest.approx(0.05, abs=0.01)

    def test_bad_bracket(self):
        with pytest.raises(ConfigError):
            fit_temperature([[1.0, 0.0]], [0], bracket=(0.0, 2.0))
