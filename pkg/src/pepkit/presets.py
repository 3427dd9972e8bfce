"""Desk-scale experiment settings shared by the test suite and example configs.

``overtrained_blobs`` is five overlapping Gaussian classes in 8 dimensions
(2,000 examples, half of them for training) fitted by a 64-64 ReLU network
for 60 epochs, long enough for test NLL to climb well above train NLL.
"""

from dataclasses import dataclass

from . import rng
from .data import Dataset, SplitSpec, split, synth_blobs
from .nn import NetworkSpec
from .pep import SigmaSearchConfig
from .train import TrainConfig

BLOBS = dict(class_count=5, per_class=400, dim=8, spread=1.5)
SPLIT = (0.5, 0.25, 0.25)
HIDDEN = (64, 64)
SIGMA_RANGE = (1e-3, 0.3)


@dataclass
class Experiment:
    spec: NetworkSpec
    data: Dataset
    train: TrainConfig
    search: SigmaSearchConfig
    seed: int


def overtrained_blobs(seed: int = 0, epochs: int = 60, class_count: int = 5,
                      train_classes=None) -> Experiment:
    """Over-trained setup; ``train_classes`` keeps a subset of classes (held-out-class OOD runs)."""
    blobs = dict(BLOBS, class_count=class_count)
    data = synth_blobs(**blobs, seed=rng.derive_seed(seed, "blobs"))
    if train_classes is not None:
        data = data.select_classes(train_classes)
    data = split(data, SplitSpec(SPLIT, rng.derive_seed(seed, "split")))
    k = data.class_count
    spec = NetworkSpec.from_widths([blobs["dim"], *HIDDEN, k])
    config = TrainConfig("adam", 3e-3, batch_size=32, epochs=epochs, seed=rng.derive_seed(seed, "train"))
    search = SigmaSearchConfig(*SIGMA_RANGE, iterations=7, members=5,
                               seed=rng.derive_seed(seed, "pep-search"))
    return Experiment(spec, data, config, search, seed)
