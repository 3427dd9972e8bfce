"""Run configuration: INI-style ``key = value`` files with section headers.

Every key has a matching CLI flag ``--<section>.<key>`` that overrides it.
Unknown sections or keys are rejected by name.
"""

from __future__ import annotations

import configparser
from dataclasses import dataclass
from pathlib import Path

from . import rng
from .data import Dataset, SplitSpec, parse_descriptor, split
from .errors import ConfigError
from .nn import NetworkSpec
from .pep import SigmaSearchConfig
from .train import TrainConfig


def _floats(text):
    return tuple(float(t) for t in str(text).split(",") if t.strip())


def _ints(text):
    return tuple(int(t) for t in str(text).split(",") if t.strip())


# section -> key -> (parser, default)
SCHEMA = {
    "run": {
        "seed": (int, 0),
        "output": (str, "out"),
    },
    "data": {
        "dataset": (str, "blobs:5,400,8,1.5,1"),
        "split": (_floats, (0.5, 0.25, 0.25)),
    },
    "network": {
        "hidden": (_ints, (64, 64)),
        "classes": (int, 0),  # 0: infer from the training labels
    },
    "train": {
        "optimizer": (str, "adam"),
        "learning_rate": (float, 1e-3),
        "beta1": (float, 0.9),
        "beta2": (float, 0.999),
        "eps": (float, 1e-8),
        "batch_size": (int, 128),
        "epochs": (int, 15),
    },
    "search": {
        "sigma_low": (float, 5e-5),
        "sigma_high": (float, 5e-3),
        "iterations": (int, 7),
        "members": (int, 5),
        "distribution": (str, "gaussian"),
        "mask": (str, "weights"),
    },
    "test": {
        "members": (int, 10),
    },
    "metrics": {
        "bins": (int, 15),
        "kld_bins": (int, 20),
    },
}


def flag_names():
    return [f"{section}.{key}" for section, keys in SCHEMA.items() for key in keys]


def _parse_mask(text: str):
    text = text.strip()
    if text in ("weights", "all"):
        return text
    pairs = []
    for item in text.split(","):
        layer, _, kind = item.strip().partition(":")
        if kind not in ("weight", "bias"):
            raise ConfigError(f"mask entries look like '0:weight', got {item!r}")
        pairs.append((int(layer), kind))
    return tuple(pairs)


@dataclass
class RunConfig:
    values: dict

    @classmethod
    def load(cls, path=None, overrides=None) -> "RunConfig":
        values = {s: {k: d for k, (_, d) in keys.items()} for s, keys in SCHEMA.items()}
        raw = {}
        if path is not None:
            parser = configparser.ConfigParser(interpolation=None, default_section="__none__")
            try:
                text = Path(path).read_text()
            except OSError as exc:
                raise ConfigError(f"cannot read config {path}: {exc}") from exc
            try:
                parser.read_string(text, source=str(path))
            except configparser.Error as exc:
                raise ConfigError(f"malformed config {path}: {exc}") from exc
            for section in parser.sections():
                for key, value in parser.items(section):
                    raw[f"{section}.{key}"] = value
        for name, value in (overrides or {}).items():
            if value is not None:
                raw[name] = value
        for name, value in raw.items():
            section, _, key = name.partition(".")
            if section not in SCHEMA or key not in SCHEMA[section]:
                raise ConfigError(f"unknown config key {name!r}")
            parse = SCHEMA[section][key][0]
            try:
                values[section][key] = parse(value)
            except ValueError as exc:
                raise ConfigError(f"bad value for {name!r}: {value!r}") from exc
        return cls(values)

    def get(self, name):
        section, _, key = name.partition(".")
        return self.values[section][key]

    @property
    def seed(self) -> int:
        return self.values["run"]["seed"]

    def derived_seed(self, purpose: str) -> int:
        return rng.derive_seed(self.seed, purpose)

    @property
    def output(self) -> Path:
        return Path(self.values["run"]["output"])

    def dataset(self, descriptor=None) -> Dataset:
        data = parse_descriptor(descriptor or self.values["data"]["dataset"])
        return split(data, SplitSpec(self.values["data"]["split"], self.derived_seed("split")))

    def network(self, input_width: int, class_count: int) -> NetworkSpec:
        classes = self.values["network"]["classes"] or class_count
        widths = [input_width, *self.values["network"]["hidden"], classes]
        return NetworkSpec.from_widths(widths)

    def train_config(self) -> TrainConfig:
        t = self.values["train"]
        return TrainConfig(t["optimizer"], t["learning_rate"], t["beta1"], t["beta2"], t["eps"],
                           t["batch_size"], t["epochs"], self.derived_seed("train"))

    def search_config(self) -> SigmaSearchConfig:
        s = self.values["search"]
        return SigmaSearchConfig(s["sigma_low"], s["sigma_high"], s["iterations"], s["members"],
                                 self.derived_seed("pep-search"), s["distribution"],
                                 _parse_mask(s["mask"]))
