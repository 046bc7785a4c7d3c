"""Experiment configuration: YAML file with nested sections over built-in defaults."""
from __future__ import annotations

import copy
from dataclasses import dataclass, field
from pathlib import Path

import yaml

METHODS = ("iceo", "saa", "pto", "pres-knn", "pres-kernel")


class ConfigError(ValueError):
    pass


DEFAULTS: dict = {
    "seed": 0,
    "problem": {"kind": "newsvendor"},
    "dgp": {"p": 3, "M": 5.0, "K": 4, "deg": 1, "B_max": 150},
    "methods": list(METHODS),
    "sizes": [100, 300, 500, 700],
    "sims": 25,
    "rho": 0.01,
    "val_fraction": 0.2,
    "test_size": 1000,
    # rho used to solve for the true-hypothesis benchmark J*
    "jstar_rho": 1e-6,
    "surrogate": {"kind": "mlp", "m": 4000, "sigma": 0.0, "width": 64, "epochs": 300, "lr": 1e-2,
                  "batch_size": 64, "seed": 0, "order": 8, "degree": 3, "offset": 1.0, "ridge": 1e-6},
    "hypothesis": {"kind": "softmax-linear", "width": 32, "scale": 0.1},
    "train": {"lrs": [1e-3, 1e-2], "epochs": 500, "batch_size": 32, "patience": 50,
              "beta1": 0.9, "beta2": 0.999, "eps": 1e-8, "val_metric": "deployed", "init": "pto"},
    "benchmarks": {"knn_k": [5, 10, 20, 50], "kernel_factors": [0.5, 1.0, 2.0, 4.0]},
    "misspec": {"degs": [1, 2, 3, 4], "n": 500},
    "test_seed_offset": 0,
}


def _merge(base: dict, over: dict, path: str = "") -> dict:
    out = copy.deepcopy(base)
    for k, v in over.items():
        if k not in base:
            raise ConfigError(f"unknown config key {path + k!r}")
        if isinstance(base[k], dict) and k != "problem":
            if not isinstance(v, dict):
                raise ConfigError(f"{path + k!r} must be a mapping")
            out[k] = _merge(base[k], v, path + k + ".")
        else:
            out[k] = v
    return out


@dataclass
class ExperimentConfig:
    raw: dict = field(default_factory=lambda: copy.deepcopy(DEFAULTS))

    def __post_init__(self):
        self.validate()

    def __getitem__(self, key):
        return self.raw[key]

    @classmethod
    def from_mapping(cls, mapping: dict | None) -> "ExperimentConfig":
        return cls(_merge(DEFAULTS, mapping or {}))

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        try:
            data = yaml.safe_load(Path(path).read_text())
        except (OSError, yaml.YAMLError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        if data is not None and not isinstance(data, dict):
            raise ConfigError("config root must be a mapping")
        return cls.from_mapping(data)

    def with_overrides(self, **over) -> "ExperimentConfig":
        return ExperimentConfig.from_mapping(_merge(self.raw, over))

    def validate(self) -> None:
        r = self.raw
        bad = [m for m in r["methods"] if m not in METHODS]
        if bad:
            raise ConfigError(f"unknown methods {bad}")
        if not r["rho"] > 0:
            raise ConfigError("rho must be positive")
        if int(r["sims"]) < 1 or not r["sizes"] or min(r["sizes"]) < 5:
            raise ConfigError("need sims >= 1 and training sizes >= 5")
        if not 0 < r["val_fraction"] < 1:
            raise ConfigError("val_fraction must lie in (0, 1)")
        if r["train"]["init"] not in ("pto", "random"):
            raise ConfigError("train.init must be 'pto' or 'random'")
        if r["hypothesis"]["kind"] not in ("softmax-linear", "softmax-mlp"):
            raise ConfigError(f"unknown hypothesis kind {r['hypothesis']['kind']!r}")
        if r["surrogate"]["kind"] not in ("mlp", "krr", "bernstein"):
            raise ConfigError(f"unknown surrogate kind {r['surrogate']['kind']!r}")
        if int(r["dgp"]["deg"]) < 1 or any(int(d) < 1 for d in r["misspec"]["degs"]):
            raise ConfigError("deg must be a positive integer")

    def dump(self) -> str:
        return yaml.safe_dump(self.raw, sort_keys=True)


def default_config_text() -> str:
    return yaml.safe_dump(DEFAULTS, sort_keys=False)
