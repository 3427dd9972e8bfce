"""Curvature of the log-likelihood landscape and the local PEP-effect formula.

Everything here uses summed log-likelihoods ``sum_i ln L_i``; per-example
means appear only in reports. For an isotropic perturbation of scale sigma
the gain of the ensemble log-likelihood over the base model is, locally,

    B = (sigma^2 / 2) * sum_i lap(L_i) / L_i
      = (sigma^2 / 2) * (lap(sum_i ln L_i) + sum_i |grad ln L_i|^2)

the second line following from ``lap(L)/L = lap(ln L) + |grad ln L|^2``.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import asdict, dataclass

import numpy as np

from . import rng as rng_mod
from .data import Dataset
from .errors import ConditioningWarning, ConfigError, NumericError
from .nn import (NetworkSpec, ParamVector, forward, gradient, loglik_from_logits,
                 per_example_grad_sqnorms)
from .pep import PerturbConfig, ensemble_loglik_per_example, member_log_likelihoods

EXACT_LOOP_MAX_PARAMS = 300
MAX_PARAMS = 100_000
EPS = np.finfo(np.float64).eps


def default_step(theta) -> float:
    return 1e-4 * max(1.0, float(np.max(np.abs(theta))) if np.size(theta) else 1.0)


def _check_size(params: ParamVector):
    if len(params) > MAX_PARAMS:
        raise ConfigError(f"curvature probes are limited to {MAX_PARAMS} parameters, "
                          f"model has {len(params)}")


def _fd_laplacian(f, mu: np.ndarray, h: float) -> float:
    f0 = float(f(mu))
    total = 0.0
    x = mu.copy()
    for k in range(mu.size):
        x[k] = mu[k] + h
        fp = float(f(x))
        x[k] = mu[k] - h
        fm = float(f(x))
        x[k] = mu[k]
        if not (math.isfinite(fp) and math.isfinite(fm)):
            raise NumericError(f"non-finite function value probing coordinate {k}")
        total += (fp - 2.0 * f0 + fm) / (h * h)
    return total


def taylor_expectation(f, mu, sigma: float, h: float | None = None) -> float:
    """Second-order approximation ``f(mu) + sigma^2/2 * lap f(mu)`` of ``E f(x)``, x ~ N(mu, sigma^2 I).

    The Laplacian comes from central second differences with step ``h``.
    """
    mu = np.atleast_1d(np.asarray(mu, dtype=np.float64))
    h = default_step(mu) if h is None else h
    f0 = float(f(mu))
    if not math.isfinite(f0):
        raise NumericError("non-finite function value at the mean")
    return f0 + 0.5 * sigma * sigma * _fd_laplacian(f, mu, h)


def mc_expectation(f, mu, sigma: float, samples: int, seed: int, batched: bool = False):
    """Monte-Carlo estimate of ``E f(x)``, x ~ N(mu, sigma^2 I).

    Args:
        batched: ``f`` maps an ``(samples, P)`` array to ``samples`` values.

    Returns:
        ``(mean, standard error)``.
    """
    if samples < 2:
        raise ConfigError("need at least two samples")
    mu = np.atleast_1d(np.asarray(mu, dtype=np.float64))
    if sigma == 0:
        return float(f(mu[None, :])[0] if batched else f(mu)), 0.0
    z = rng_mod.stream(seed, "mc-expectation").standard_normal((samples, mu.size))
    x = mu + sigma * z
    vals = np.asarray(f(x), dtype=np.float64) if batched else np.array([float(f(row)) for row in x])
    return float(vals.mean()), float(vals.std(ddof=1) / math.sqrt(samples))


def _loglik_vector(spec, data):
    def per_example(theta):
        return loglik_from_logits(forward(spec, ParamVector(theta, spec.layout()), data.features),
                                  data.labels)
    return per_example


def _per_example_second_differences(spec, params, data, h):
    """``P x N`` second differences of ``ln L_i`` along each coordinate, and ``ln L_i(theta)``."""
    ll = _loglik_vector(spec, data)
    theta = params.values
    l0 = ll(theta)
    out = np.empty((theta.size, l0.size))
    x = theta.copy()
    for k in range(theta.size):
        x[k] = theta[k] + h
        lp = ll(x)
        x[k] = theta[k] - h
        lm = ll(x)
        x[k] = theta[k]
        out[k] = lp - 2.0 * l0 + lm
    return out / (h * h), l0


def _warn_conditioning(total_f: float, h: float, count: int, estimate: float):
    roundoff = 4.0 * EPS * abs(total_f) / (h * h) * count
    if roundoff > 1e-2 * abs(estimate) and roundoff > 1e-8:
        warnings.warn(f"finite-difference step h={h:g} is near the float64 noise floor "
                      f"(roundoff ~{roundoff:.2g} vs estimate {estimate:.4g})",
                      ConditioningWarning, stacklevel=3)


def hutchinson_laplacian(spec: NetworkSpec, params: ParamVector, data: Dataset,
                         h: float | None = None, probe_count: int = 1000, seed: int = 0):
    """Hutchinson estimate of ``tr H`` for the summed log-likelihood.

    Uses Rademacher probes ``v`` and ``Hv ~ (g(theta + h v) - g(theta - h v)) / 2h``.

    Returns:
        ``(estimate, standard error)``.
    """
    _check_size(params)
    if probe_count < 2:
        raise ConfigError("need at least two probes")
    theta = params.values
    h = default_step(theta) if h is None else h
    gen = rng_mod.stream(seed, "hutchinson")
    samples = np.empty(probe_count)
    for s in range(probe_count):
        v = gen.choice(np.array([-1.0, 1.0]), size=theta.size)
        gp = gradient(spec, params.with_values(theta + h * v), data.features, data.labels).values
        gm = gradient(spec, params.with_values(theta - h * v), data.features, data.labels).values
        samples[s] = v @ (gp - gm) / (2.0 * h)
    return float(samples.mean()), float(samples.std(ddof=1) / math.sqrt(probe_count))


def laplacian_loglik(spec: NetworkSpec, params: ParamVector, data: Dataset,
                     h: float | None = None, probe_count: int = 1000, seed: int = 0,
                     method: str = "auto") -> float:
    """Laplacian of the summed log-likelihood at ``params``.

    ``method="auto"`` loops over coordinates with central second differences
    when P <= 300 and falls back to :func:`hutchinson_laplacian` above that.
    """
    _check_size(params)
    if not (h is None or h > 0):
        raise ConfigError("finite-difference step must be positive")
    if method == "auto":
        method = "exact" if len(params) <= EXACT_LOOP_MAX_PARAMS else "hutchinson"
    h = default_step(params.values) if h is None else h
    if method == "hutchinson":
        return hutchinson_laplacian(spec, params, data, h, probe_count, seed)[0]
    if method != "exact":
        raise ConfigError(f"unknown Laplacian method {method!r}")
    ll = _loglik_vector(spec, data)
    value = _fd_laplacian(lambda t: ll(t).sum(), params.values, h)
    _warn_conditioning(ll(params.values).sum(), h, len(params), value)
    return value


def fisher_trace(spec: NetworkSpec, params: ParamVector, data: Dataset) -> float:
    """Trace of the empirical Fisher ``sum_i grad ln L_i grad ln L_i^T``."""
    _check_size(params)
    return float(per_example_grad_sqnorms(spec, params, data.features, data.labels).sum())


def pep_effect_predicted(laplacian: float, fisher: float, sigma: float) -> float:
    """``(sigma^2 / 2) * (laplacian + fisher)``."""
    if sigma < 0:
        raise ConfigError("sigma must be non-negative")
    return 0.5 * sigma * sigma * (laplacian + fisher)


def laplacian_ratios(spec: NetworkSpec, params: ParamVector, data: Dataset,
                     h: float | None = None, form: str = "log", probe_count: int = 1000,
                     seed: int = 0) -> np.ndarray:
    """Per-example ``lap(L_i) / L_i``.

    ``form="log"`` evaluates ``lap(ln L_i) + |grad ln L_i|^2``, which avoids
    underflow for tiny ``L_i``. ``form="direct"`` differentiates
    ``L_i = exp(ln L_i)`` itself. Models above 300 parameters use Rademacher
    probes with directional second differences.
    """
    _check_size(params)
    if form not in ("log", "direct"):
        raise ConfigError(f"unknown form {form!r}")
    theta = params.values
    h = default_step(theta) if h is None else h
    ll = _loglik_vector(spec, data)
    if len(params) <= EXACT_LOOP_MAX_PARAMS:
        if form == "log":
            second, _ = _per_example_second_differences(spec, params, data, h)
            return second.sum(axis=0) + per_example_grad_sqnorms(
                spec, params, data.features, data.labels)
        l0 = ll(theta)
        lik0 = np.exp(l0)
        total = np.zeros(l0.size)
        x = theta.copy()
        for k in range(theta.size):
            x[k] = theta[k] + h
            lp = np.exp(ll(x))
            x[k] = theta[k] - h
            lm = np.exp(ll(x))
            x[k] = theta[k]
            total += (lp - 2.0 * lik0 + lm) / (h * h)
        return total / lik0

    gen = rng_mod.stream(seed, "hutchinson/per-example")
    l0 = ll(theta)
    acc = np.zeros(l0.size)
    for _ in range(probe_count):
        v = gen.choice(np.array([-1.0, 1.0]), size=theta.size)
        lp, lm = ll(theta + h * v), ll(theta - h * v)
        if form == "log":
            acc += (lp - 2.0 * l0 + lm) / (h * h)
        else:
            acc += (np.exp(lp - l0) - 2.0 + np.exp(lm - l0)) / (h * h)
    acc /= probe_count
    if form == "log":
        acc += per_example_grad_sqnorms(spec, params, data.features, data.labels)
    return acc


def pep_effect_direct(spec: NetworkSpec, params: ParamVector, data: Dataset, sigma: float,
                      h: float | None = None, form: str = "log", probe_count: int = 1000,
                      seed: int = 0) -> float:
    """``(sigma^2 / 2) * sum_i lap(L_i) / L_i`` from per-example probes."""
    if sigma < 0:
        raise ConfigError("sigma must be non-negative")
    if sigma == 0:
        return 0.0
    ratios = laplacian_ratios(spec, params, data, h, form, probe_count, seed)
    return 0.5 * sigma * sigma * float(ratios.sum())


def pep_effect_observed(spec: NetworkSpec, params: ParamVector, data: Dataset, sigma: float,
                        members: int, seed: int = 0, distribution: str = "gaussian",
                        mask="all"):
    """Monte-Carlo gain ``L_ens(sigma) - L(theta*)`` in the summed convention.

    The standard error linearizes ``ln`` around the ensemble mean:
    ``se = std_j(sum_i L_ij / Lbar_i) / sqrt(m)``.

    Returns:
        ``(gain, standard error)``.
    """
    config = PerturbConfig(sigma, members, distribution, mask, seed)
    base = loglik_from_logits(forward(spec, params, data.features), data.labels)
    member_ll = member_log_likelihoods(spec, params, config, data)
    ens = ensemble_loglik_per_example(member_ll)
    gain = float(ens.sum() - base.sum())
    if members < 2:
        return gain, float("nan")
    weights = np.exp(member_ll - ens).sum(axis=1)
    return gain, float(weights.std(ddof=1) / math.sqrt(members))


@dataclass
class CurvatureReport:
    laplacian_loglik: float
    fisher_trace: float
    pep_effect_predicted: float
    pep_effect_direct: float
    pep_effect_observed: float
    observed_stderr: float
    sigma: float
    n_examples: int
    param_count: int
    method: str
    probe_count: int
    step: float
    members: int
    seed: int

    def to_dict(self) -> dict:
        d = asdict(self)
        d["convention"] = "summed"
        d["laplacian_sign"] = int(np.sign(self.laplacian_loglik))
        return d


def curvature_report(spec: NetworkSpec, params: ParamVector, data: Dataset, sigma: float,
                     members: int = 1000, h: float | None = None, probe_count: int = 1000,
                     seed: int = 0) -> CurvatureReport:
    _check_size(params)
    h = default_step(params.values) if h is None else h
    method = "exact" if len(params) <= EXACT_LOOP_MAX_PARAMS else "hutchinson"
    lap = laplacian_loglik(spec, params, data, h, probe_count, rng_mod.derive_seed(seed, "laplacian"))
    fisher = fisher_trace(spec, params, data)
    direct = pep_effect_direct(spec, params, data, sigma, h, "log", probe_count,
                               rng_mod.derive_seed(seed, "ratios"))
    observed, se = pep_effect_observed(spec, params, data, sigma, members,
                                       rng_mod.derive_seed(seed, "observed"))
    return CurvatureReport(lap, fisher, pep_effect_predicted(lap, fisher, sigma), direct, observed,
                           se, sigma, len(data), len(params), method,
                           probe_count if method == "hutchinson" else 0, h, members, seed)
