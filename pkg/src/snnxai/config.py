"""Run configuration: dataset, model, training and evaluation settings.

Presets hold the published defaults per dataset; a JSON config file and then
command-line flags override them field by field.
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import List, Optional

from .evaluation import EvalConfig
from .lif import LifConfig
from .train import TrainConfig

CONFIG_VERSION = 1


@dataclass(frozen=True)
class DatasetSpec:
    mode: str = "synthetic"
    steps: int = 900_000
    max_duration: int = 600
    seed: int = 7
    subject: Optional[str] = None
    description: Optional[str] = None
    sensors: Optional[str] = None
    activities: Optional[str] = None

    def __post_init__(self):
        if self.mode not in ("synthetic", "adl"):
            raise ValueError(f"unknown dataset mode {self.mode!r}")

    def check_inputs(self) -> None:
        """ADL ingestion needs all three UCI files to exist."""
        if self.mode == "adl":
            for name in ("description", "sensors", "activities"):
                path = getattr(self, name)
                if path is None:
                    raise ValueError(f"adl mode needs the {name} file")
                if not Path(path).exists():
                    raise FileNotFoundError(path)

    @property
    def splits(self) -> List[float]:
        return [0.7, 0.3] if self.mode == "synthetic" else [0.6, 0.2, 0.2]


@dataclass(frozen=True)
class RunConfig:
    dataset: DatasetSpec = field(default_factory=DatasetSpec)
    hidden: tuple = (10,)
    lif: LifConfig = field(default_factory=LifConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    eval: EvalConfig = field(default_factory=EvalConfig)
    samples_per_class: int = 25
    out: str = "."

    def layer_sizes(self, n_inputs: int, n_classes: int) -> List[int]:
        return [n_inputs, *self.hidden, n_classes]

    def to_dict(self) -> dict:
        d = asdict(self)
        d["hidden"] = list(self.hidden)
        del d["out"]  # keeps artifacts identical across output locations
        return {"version": CONFIG_VERSION, **d}


def preset(mode: str) -> RunConfig:
    """Defaults of the single-hidden-layer network for ``mode``."""
    if mode == "synthetic":
        return RunConfig(
            dataset=DatasetSpec("synthetic"),
            hidden=(10,),
            lif=LifConfig(dt=0.001, tau_syn=0.01, tau_mem=0.001),
            train=TrainConfig(learning_rate=0.001, batch_size=128, max_epochs=300,
                              patience=10, window_len=100),
        )
    if mode == "adl":
        return RunConfig(
            dataset=DatasetSpec("adl"),
            hidden=(100,),
            lif=LifConfig(dt=0.001, tau_syn=0.01, tau_mem=0.01),
            train=TrainConfig(learning_rate=0.01, batch_size=128, max_epochs=100,
                              patience=10, window_len=1000),
        )
    raise ValueError(f"unknown mode {mode!r}")


def _merge(obj, overrides: dict, where: str):
    names = {f.name for f in fields(obj)}
    unknown = set(overrides) - names
    if unknown:
        raise ValueError(f"unknown {where} keys {sorted(unknown)}")
    return replace(obj, **overrides)


def apply_overrides(cfg: RunConfig, doc: dict) -> RunConfig:
    """Overlay a (possibly partial) config dictionary onto ``cfg``."""
    doc = dict(doc)
    version = doc.pop("version", CONFIG_VERSION)
    if version != CONFIG_VERSION:
        raise ValueError(f"unsupported config version {version!r}")
    nested = {"dataset": DatasetSpec, "lif": LifConfig, "train": TrainConfig, "eval": EvalConfig}
    updates = {}
    for key, value in doc.items():
        if key in nested:
            updates[key] = _merge(getattr(cfg, key), value, key)
        elif key == "hidden":
            updates[key] = tuple(int(h) for h in value)
        elif key in ("samples_per_class", "out"):
            updates[key] = value
        else:
            raise ValueError(f"unknown config key {key!r}")
    return replace(cfg, **updates)


def load_config(path, base: RunConfig) -> RunConfig:
    with open(path, encoding="utf-8") as fh:
        return apply_overrides(base, json.load(fh))
