"""Scoring rules, reliability bins, ECE, and the symmetrized-KL confidence score."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .nn import count_floored, per_example_log_likelihood


def _probs_labels(probs, labels):
    p = np.asarray(probs, dtype=np.float64)
    y = np.asarray(labels, dtype=np.int64)
    if p.ndim != 2 or y.shape != (p.shape[0],):
        raise ValueError(f"probs {p.shape} and labels {y.shape} do not align")
    return p, y


def nll(probs, labels) -> float:
    """Mean negative log-probability of the true label."""
    return float(-per_example_log_likelihood(probs, labels).mean())


def brier(probs, labels) -> float:
    """``(1/(N K)) sum_i sum_k (onehot_ik - p_ik)^2``, in ``[0, 2/K]``."""
    p, y = _probs_labels(probs, labels)
    diff = p.copy()
    diff[np.arange(len(y)), y] -= 1.0
    return float(np.mean(diff * diff))


def accuracy(probs, labels) -> float:
    p, y = _probs_labels(probs, labels)
    return float(np.mean(p.argmax(axis=1) == y))


@dataclass
class ReliabilityBins:
    """Bin ``m`` (1-based) holds confidences in ``((m-1)/M, m/M]``."""

    counts: np.ndarray
    accuracy: np.ndarray
    confidence: np.ndarray

    @property
    def bin_count(self) -> int:
        return len(self.counts)

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    def rows(self):
        m = self.bin_count
        for i in range(m):
            yield i / m, (i + 1) / m, int(self.counts[i]), float(self.accuracy[i]), float(self.confidence[i])


def reliability(probs, labels, bin_count: int = 15) -> ReliabilityBins:
    if bin_count < 1:
        raise ValueError("bin_count must be at least 1")
    p, y = _probs_labels(probs, labels)
    conf = p.max(axis=1)
    correct = (p.argmax(axis=1) == y).astype(np.float64)
    edges = np.arange(1, bin_count + 1) / bin_count
    # first upper edge >= conf; confidence 0 falls into the first bin
    which = np.minimum(np.searchsorted(edges, conf, side="left"), bin_count - 1)
    counts = np.bincount(which, minlength=bin_count)
    hits = np.bincount(which, weights=correct, minlength=bin_count)
    conf_sum = np.bincount(which, weights=conf, minlength=bin_count)
    safe = np.maximum(counts, 1)
    return ReliabilityBins(counts, np.where(counts > 0, hits / safe, 0.0),
                           np.where(counts > 0, conf_sum / safe, 0.0))


def ece(bins: ReliabilityBins) -> float:
    """Expected calibration error in percent; empty bins contribute nothing."""
    n = bins.total
    if n == 0:
        return 0.0
    gaps = np.abs(bins.accuracy - bins.confidence)
    return float(100.0 * np.sum(bins.counts / n * gaps))


def confidence_histogram(conf, bin_count: int, smoothing: float = 1e-6) -> np.ndarray:
    c = np.asarray(conf, dtype=np.float64)
    if c.size == 0:
        raise ValueError("empty confidence sample")
    if np.any((c < 0) | (c > 1)):
        raise ValueError("confidences must lie in [0, 1]")
    hist, _ = np.histogram(c, bins=bin_count, range=(0.0, 1.0))
    p = hist / hist.sum() + smoothing
    return p / p.sum()


def kl_divergence(p, q) -> float:
    p = np.asarray(p, dtype=np.float64)
    q = np.asarray(q, dtype=np.float64)
    return float(np.sum(p * np.log(p / q)))


def symmetrized_kld(in_conf, out_conf, bin_count: int = 20, smoothing: float = 1e-6) -> float:
    """``KL(p||q) + KL(q||p)`` between smoothed confidence histograms."""
    p = confidence_histogram(in_conf, bin_count, smoothing)
    q = confidence_histogram(out_conf, bin_count, smoothing)
    return kl_divergence(p, q) + kl_divergence(q, p)


@dataclass
class CalibrationReport:
    nll: float
    brier: float
    ece_percent: float
    accuracy: float
    bins: ReliabilityBins
    provenance: dict = field(default_factory=dict)
    floored: int = 0

    def to_dict(self) -> dict:
        return {
            "nll": self.nll,
            "brier": self.brier,
            "ece_percent": self.ece_percent,
            "accuracy": self.accuracy,
            "top1_error_percent": 100.0 * (1.0 - self.accuracy),
            "bin_count": self.bins.bin_count,
            "floored_probabilities": self.floored,
            "provenance": self.provenance,
        }


def calibration_report(probs, labels, bin_count: int = 15, provenance=None) -> CalibrationReport:
    bins = reliability(probs, labels, bin_count)
    return CalibrationReport(
        nll=nll(probs, labels),
        brier=brier(probs, labels),
        ece_percent=ece(bins),
        accuracy=accuracy(probs, labels),
        bins=bins,
        provenance=dict(provenance or {"method": "baseline"}),
        floored=count_floored(probs, labels),
    )
