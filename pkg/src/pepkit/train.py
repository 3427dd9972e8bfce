"""Maximum-likelihood training with per-epoch checkpoints."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import rng as rng_mod
from .checkpoint import save_checkpoint
from .data import Dataset
from .errors import ConfigError, NumericError, TrainingDiverged
from .nn import NetworkSpec, ParamVector, forward, gradient, init_params, loglik_from_logits


@dataclass(frozen=True)
class TrainConfig:
    optimizer: str = "adam"
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    batch_size: int = 128
    epochs: int = 15
    seed: int = 0

    def __post_init__(self):
        if self.optimizer not in ("sgd", "adam"):
            raise ConfigError(f"optimizer must be 'sgd' or 'adam', got {self.optimizer!r}")
        if not self.learning_rate > 0:
            raise ConfigError("learning_rate must be positive")
        if not (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1):
            raise ConfigError("adam betas must lie in [0, 1)")
        if not self.eps > 0:
            raise ConfigError("eps must be positive")
        if self.batch_size < 1 or self.epochs < 1:
            raise ConfigError("batch_size and epochs must be at least 1")


class Adam:
    """Adam on a flat vector, minimizing.

    ``m <- b1 m + (1-b1) g``, ``v <- b2 v + (1-b2) g^2``,
    ``theta <- theta - lr * m_hat / (sqrt(v_hat) + eps)`` with bias-corrected
    ``m_hat = m / (1 - b1^t)`` and ``v_hat = v / (1 - b2^t)``.
    """

    def __init__(self, size, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m = np.zeros(size)
        self.v = np.zeros(size)
        self.t = 0

    def step(self, theta: np.ndarray, grad: np.ndarray) -> np.ndarray:
        self.t += 1
        self.m = self.beta1 * self.m + (1.0 - self.beta1) * grad
        self.v = self.beta2 * self.v + (1.0 - self.beta2) * grad * grad
        m_hat = self.m / (1.0 - self.beta1 ** self.t)
        v_hat = self.v / (1.0 - self.beta2 ** self.t)
        return theta - self.lr * m_hat / (np.sqrt(v_hat) + self.eps)


class SGD:
    def __init__(self, size, lr=1e-3):
        self.lr = lr

    def step(self, theta, grad):
        return theta - self.lr * grad


@dataclass
class Checkpoint:
    epoch: int
    params: ParamVector
    train_nll: float
    val_nll: float


@dataclass
class CheckpointSeries:
    spec: NetworkSpec
    entries: list = field(default_factory=list)

    def __len__(self):
        return len(self.entries)

    def __iter__(self):
        return iter(self.entries)

    def __getitem__(self, i):
        return self.entries[i]

    @property
    def final(self) -> Checkpoint:
        return self.entries[-1]


def mean_nll(spec: NetworkSpec, params: ParamVector, data: Dataset) -> float:
    return float(-loglik_from_logits(forward(spec, params, data.features), data.labels).mean())


def train(spec: NetworkSpec, dataset: Dataset, config: TrainConfig) -> CheckpointSeries:
    """Fit ``spec`` on the train split, checkpointing after every epoch.

    Raises:
        TrainingDiverged: a mini-batch loss or parameter became non-finite;
            ``exc.series`` holds the epochs completed before it.
    """
    train_set = dataset.subset("train")
    val_set = dataset.subset("validation")
    if train_set.class_count > spec.class_count:
        raise ConfigError(f"labels reach {train_set.class_count - 1} but network has "
                          f"{spec.class_count} outputs")
    theta = init_params(spec, rng_mod.stream(config.seed, "train/init")).values
    layout = spec.layout()
    if config.optimizer == "adam":
        opt = Adam(theta.size, config.learning_rate, config.beta1, config.beta2, config.eps)
    else:
        opt = SGD(theta.size, config.learning_rate)
    shuffle = rng_mod.stream(config.seed, "train/shuffle")
    series = CheckpointSeries(spec)
    n = len(train_set)
    for epoch in range(1, config.epochs + 1):
        order = shuffle.permutation(n)
        try:
            for start in range(0, n, config.batch_size):
                idx = order[start:start + config.batch_size]
                params = ParamVector(theta, layout)
                g = gradient(spec, params, train_set.features[idx], train_set.labels[idx]).values
                # minimize the batch-mean negative log-likelihood
                theta = opt.step(theta, -g / idx.size)
                if not np.all(np.isfinite(theta)):
                    raise NumericError("non-finite parameters")
            params = ParamVector(theta.copy(), layout)
            train_nll = mean_nll(spec, params, train_set)
            val_nll = mean_nll(spec, params, val_set)
        except NumericError as exc:
            raise TrainingDiverged(epoch, series) from exc
        if not (np.isfinite(train_nll) and np.isfinite(val_nll)):
            raise TrainingDiverged(epoch, series)
        series.entries.append(Checkpoint(epoch, params, train_nll, val_nll))
    return series


def overfit_gap(spec: NetworkSpec, params: ParamVector, train_set: Dataset, test_set: Dataset) -> float:
    """Mean test NLL minus mean train NLL."""
    return mean_nll(spec, params, test_set) - mean_nll(spec, params, train_set)


def checkpoint_name(epoch: int) -> str:
    return f"epoch_{epoch:03d}.ckpt"


def write_series(series: CheckpointSeries, out_dir) -> list:
    """Write one checkpoint per epoch plus ``metrics.csv``; return checkpoint paths."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = []
    for entry in series:
        path = out / checkpoint_name(entry.epoch)
        save_checkpoint(path, series.spec, entry.params)
        paths.append(path)
    with open(out / "metrics.csv", "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["epoch", "train_nll", "val_nll"])
        for entry in series:
            writer.writerow([entry.epoch, repr(entry.train_nll), repr(entry.val_nll)])
    return paths
