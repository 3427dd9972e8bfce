"""Golden-section maximization with a fixed number of interval reductions."""

import math
from dataclasses import dataclass, field

from .errors import ConfigError

INV_PHI = (math.sqrt(5.0) - 1.0) / 2.0


@dataclass
class GoldenResult:
    x_star: float
    low: float
    high: float
    evaluations: list = field(default_factory=list)  # (x, f(x)) in call order
    final_probes: tuple = ()  # the two interior (x, f(x)) compared in the last reduction


def golden_section_max(f, low: float, high: float, iterations: int) -> GoldenResult:
    """Maximize ``f`` on ``[low, high]`` by ``iterations`` golden-section reductions.

    Each reduction shrinks the bracket by ``INV_PHI``. The two initial interior
    probes cost two evaluations and every reduction but the last adds one, so
    ``f`` is called ``iterations + 1`` times. Returns the final bracket midpoint.
    """
    if not low < high:
        raise ConfigError(f"search bracket needs low < high, got [{low}, {high}]")
    if iterations < 1:
        raise ConfigError("iterations must be at least 1")
    evals = []

    def probe(x):
        y = float(f(x))
        evals.append((x, y))
        return y

    a, b = float(low), float(high)
    c = b - INV_PHI * (b - a)
    d = a + INV_PHI * (b - a)
    fc, fd = probe(c), probe(d)
    for k in range(iterations):
        last = k == iterations - 1
        if last:
            final = ((c, fc), (d, fd))
        if fc >= fd:
            b = d
            if not last:
                d, fd = c, fc
                c = b - INV_PHI * (b - a)
                fc = probe(c)
        else:
            a = c
            if not last:
                c, fc = d, fd
                d = a + INV_PHI * (b - a)
                fd = probe(d)
    return GoldenResult(0.5 * (a + b), a, b, evals, final)
