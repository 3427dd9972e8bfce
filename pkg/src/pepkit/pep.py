"""Parameter ensembles by perturbation of a trained parameter vector.

Member ``j`` is ``theta* + sigma * z_j`` on the masked coordinates, where
``z_j`` is a unit-variance noise vector drawn from the stream
``(seed, "member/j")``. The draw for coordinate ``k`` is the ``k``-th entry of
that stream regardless of ``sigma`` or the mask, which gives common random
numbers across ``sigma`` values for free.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from . import rng as rng_mod
from .data import Dataset
from .errors import ConfigError, NoPEPBenefitWarning
from .nn import NetworkSpec, ParamVector, forward, loglik_from_logits, softmax
from .search import golden_section_max

DISTRIBUTIONS = ("gaussian", "uniform")


def default_mask(spec: NetworkSpec) -> tuple:
    """Every weight matrix; biases are left unperturbed."""
    return tuple((i, "weight") for i in range(len(spec.layers)))


def resolve_mask(spec: NetworkSpec, mask) -> tuple:
    """Accept ``None``/``"weights"``, ``"all"``, or explicit ``(layer, kind)`` pairs."""
    if mask is None or mask == "weights":
        return default_mask(spec)
    if mask == "all":
        return tuple((i, kind) for i in range(len(spec.layers)) for kind in ("weight", "bias"))
    pairs = tuple((int(layer), str(kind)) for layer, kind in mask)
    known = {(s.layer, s.kind) for s in spec.layout()}
    for pair in pairs:
        if pair not in known:
            raise ConfigError(f"mask entry {pair} names no parameter segment")
    if not pairs:
        raise ConfigError("perturbation mask is empty")
    return pairs


def mask_vector(spec: NetworkSpec, mask) -> np.ndarray:
    chosen = set(resolve_mask(spec, mask))
    flags = np.zeros(spec.param_count, dtype=bool)
    for seg in spec.layout():
        if (seg.layer, seg.kind) in chosen:
            flags[seg.offset:seg.stop] = True
    return flags


@dataclass(frozen=True)
class PerturbConfig:
    sigma: float
    members: int = 10
    distribution: str = "gaussian"
    mask: object = None
    seed: int = 0

    def __post_init__(self):
        if not (self.sigma >= 0 and math.isfinite(self.sigma)):
            raise ConfigError(f"sigma must be a finite non-negative number, got {self.sigma}")
        if self.members < 1:
            raise ConfigError("ensemble needs at least one member")
        if self.distribution not in DISTRIBUTIONS:
            raise ConfigError(f"distribution must be one of {DISTRIBUTIONS}")
        if isinstance(self.mask, (list, tuple)) and len(self.mask) == 0:
            raise ConfigError("perturbation mask is empty")


@dataclass(frozen=True)
class SigmaSearchConfig:
    sigma_low: float = 5e-5
    sigma_high: float = 5e-3
    iterations: int = 7
    members: int = 5
    seed: int = 0
    distribution: str = "gaussian"
    mask: object = None

    def __post_init__(self):
        if not 0 < self.sigma_low < self.sigma_high:
            raise ConfigError(f"need 0 < sigma_low < sigma_high, got "
                              f"[{self.sigma_low}, {self.sigma_high}]")
        if self.iterations < 1 or self.members < 1:
            raise ConfigError("iterations and members must be at least 1")

    def perturb(self, sigma: float) -> PerturbConfig:
        return PerturbConfig(sigma, self.members, self.distribution, self.mask, self.seed)


@dataclass
class SigmaPoint:
    sigma: float
    ensemble_ll: float
    member_ll: tuple


@dataclass
class SigmaCurve:
    points: list = field(default_factory=list)

    def sigmas(self) -> np.ndarray:
        return np.array([p.sigma for p in self.points])

    def values(self) -> np.ndarray:
        return np.array([p.ensemble_ll for p in self.points])


def unit_noise(size: int, distribution: str, seed: int, member: int) -> np.ndarray:
    """Unit-variance noise for one member; uniform draws lie in [-sqrt 3, sqrt 3]."""
    gen = rng_mod.stream(seed, f"member/{member}")
    if distribution == "gaussian":
        return gen.standard_normal(size)
    half = math.sqrt(3.0)
    return gen.uniform(-half, half, size)


def sample_member(spec: NetworkSpec, theta_star: ParamVector, config: PerturbConfig,
                  member: int) -> ParamVector:
    """Parameters of ensemble member ``member``."""
    if config.sigma == 0:
        return theta_star.with_values(theta_star.values.copy())
    flags = mask_vector(spec, config.mask)
    noise = unit_noise(len(theta_star), config.distribution, config.seed, member)
    values = theta_star.values.copy()
    values[flags] += config.sigma * noise[flags]
    return theta_star.with_values(values)


def average_probs(member_probs) -> np.ndarray:
    """Running mean in member order; identical members give their common value exactly."""
    avg = None
    for j, p in enumerate(member_probs, start=1):
        avg = np.array(p, dtype=np.float64) if avg is None else avg + (p - avg) / j
    if avg is None:
        raise ConfigError("no members to average")
    return avg


def ensemble_predict(spec: NetworkSpec, theta_star: ParamVector, config: PerturbConfig,
                     features) -> np.ndarray:
    """Mean of member softmax outputs."""
    return average_probs(
        softmax(forward(spec, sample_member(spec, theta_star, config, j), features))
        for j in range(config.members)
    )


def member_log_likelihoods(spec: NetworkSpec, theta_star: ParamVector, config: PerturbConfig,
                           data: Dataset) -> np.ndarray:
    """``m x N`` matrix of ``ln L_i(theta_j)``."""
    return np.stack([
        loglik_from_logits(forward(spec, sample_member(spec, theta_star, config, j), data.features),
                           data.labels)
        for j in range(config.members)
    ])


def ensemble_loglik_per_example(member_ll: np.ndarray) -> np.ndarray:
    """``ln((1/m) sum_j L_ij)`` computed in log space."""
    top = member_ll.max(axis=0)
    return top + np.log(np.exp(member_ll - top).mean(axis=0))


def ensemble_log_likelihood(spec: NetworkSpec, theta_star: ParamVector, config: PerturbConfig,
                            data: Dataset):
    """Return ``(ensemble mean log-likelihood, per-member mean log-likelihoods)``."""
    ll = member_log_likelihoods(spec, theta_star, config, data)
    return float(ensemble_loglik_per_example(ll).mean()), tuple(float(v) for v in ll.mean(axis=1))


def baseline_log_likelihood(spec: NetworkSpec, theta_star: ParamVector, data: Dataset) -> float:
    return float(loglik_from_logits(forward(spec, theta_star, data.features), data.labels).mean())


def _evaluate(spec, theta_star, search, data, sigma) -> SigmaPoint:
    value, members = ensemble_log_likelihood(spec, theta_star, search.perturb(sigma), data)
    return SigmaPoint(float(sigma), value, members)


def golden_section_sigma(spec: NetworkSpec, theta_star: ParamVector, search: SigmaSearchConfig,
                         validation: Dataset, tolerance: float = 0.0):
    """Search for the sigma maximizing validation ensemble log-likelihood.

    All evaluations share the member noise streams, so the objective is a
    deterministic function of sigma. A :class:`NoPEPBenefitWarning` is
    emitted when both interior probes of the last reduction score below the
    unperturbed model. The curve holds every golden-section probe plus a guard
    evaluation at ``sigma_low``, sorted by sigma.

    Returns:
        ``(sigma_star, curve)`` with ``sigma_star`` the final bracket midpoint.
    """
    resolve_mask(spec, search.mask)
    points = {}

    def objective(sigma):
        point = _evaluate(spec, theta_star, search, validation, sigma)
        points[point.sigma] = point
        return point.ensemble_ll

    result = golden_section_max(objective, search.sigma_low, search.sigma_high, search.iterations)
    objective(search.sigma_low)
    baseline = baseline_log_likelihood(spec, theta_star, validation)
    if all(y < baseline - tolerance for _, y in result.final_probes):
        warnings.warn(
            f"no PEP benefit: both final interior probes fall below the baseline {baseline:.6g}",
            NoPEPBenefitWarning, stacklevel=2,
        )
    curve = SigmaCurve([points[s] for s in sorted(points)])
    return result.x_star, curve


def sigma_grid_scan(spec: NetworkSpec, theta_star: ParamVector, search: SigmaSearchConfig,
                    data: Dataset, n_points: int = 50) -> SigmaCurve:
    """Evaluate the search objective on an evenly spaced grid over the bracket."""
    grid = np.linspace(search.sigma_low, search.sigma_high, n_points)
    return SigmaCurve([_evaluate(spec, theta_star, search, data, s) for s in grid])
