"""Temperature scaling fitted by golden-section search."""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError
from .nn import loglik_from_logits, softmax
from .search import golden_section_max

DEFAULT_BRACKET = (0.05, 20.0)


def scale_logits(logits, temperature: float) -> np.ndarray:
    """``softmax(logits / T)``."""
    if not temperature > 0:
        raise ConfigError(f"temperature must be positive, got {temperature}")
    return softmax(np.asarray(logits, dtype=np.float64) / temperature)


@dataclass
class TemperatureFit:
    t_star: float
    nll_before: float
    nll_after: float
    at_bracket_edge: bool = False


def _mean_ll(logits, labels, t):
    return float(loglik_from_logits(np.asarray(logits) / t, labels).mean())


def fit_temperature(logits, labels, bracket=DEFAULT_BRACKET, iterations: int = 40) -> TemperatureFit:
    """Maximize validation mean log-likelihood over ``T`` in ``bracket``.

    The golden-section result is checked against a 21-point geometric grid
    (re-searching next to a better grid point) and against ``T = 1``.
    """
    low, high = float(bracket[0]), float(bracket[1])
    if not 0 < low < high:
        raise ConfigError(f"temperature bracket must satisfy 0 < low < high, got {bracket}")

    def f(t):
        return _mean_ll(logits, labels, t)

    result = golden_section_max(f, low, high, iterations)
    t_star, best = result.x_star, f(result.x_star)

    grid = np.geomspace(low, high, 21)
    grid_vals = [f(t) for t in grid]
    i = int(np.argmax(grid_vals))
    if grid_vals[i] > best:
        sub = golden_section_max(f, grid[max(i - 1, 0)], grid[min(i + 1, 20)], iterations)
        t_star, best = sub.x_star, f(sub.x_star)
        if grid_vals[i] > best:
            t_star, best = float(grid[i]), grid_vals[i]

    nll_before = -f(1.0)
    if low <= 1.0 <= high and -nll_before >= best:
        t_star, best = 1.0, -nll_before

    edge = min(t_star - low, high - t_star) < 1e-3 * (high - low)
    if edge:
        warnings.warn(f"fitted temperature {t_star:.4g} sits at the bracket edge "
                      f"[{low:g}, {high:g}]", RuntimeWarning, stacklevel=2)
    return TemperatureFit(float(t_star), nll_before, -best, edge)
