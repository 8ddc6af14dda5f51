"""Declarative run configuration: INI-style file with [graph], [model],
[train], and [split] sections.  Every field defaults to the tuned values
(lr 0.009, dropout 0.05, d 1, C 64, L 2, lambda 1e-5, kernels {1,3}, B 4096,
target pooling, kappa 3.5 km, max degree 10, k 2, 70/10/20 splits); unknown
sections or keys are rejected.
"""

from __future__ import annotations

import configparser
from dataclasses import dataclass, field, fields

from .data import SplitSpec
from .errors import ConfigError
from .model import ModelConfig
from .training import TrainConfig


@dataclass
class GraphParams:
    kappa_km: float = 3.5
    max_degree: int = 10
    k: int = 2


@dataclass
class RunConfig:
    graph: GraphParams = field(default_factory=GraphParams)
    model: ModelConfig = field(default_factory=ModelConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    split: SplitSpec = field(default_factory=SplitSpec)

    def snapshot(self) -> dict:
        return {
            "graph": {f.name: getattr(self.graph, f.name)
                      for f in fields(self.graph)},
            "model": self.model.to_dict(),
            "train": self.train.to_dict(),
            "split": self.split.to_dict(),
        }


def _coerce(section: str, key: str, raw: str, current):
    if isinstance(current, bool):
        if raw.lower() in ("1", "true", "yes"):
            return True
        if raw.lower() in ("0", "false", "no"):
            return False
        raise ConfigError(f"[{section}] {key}: expected a boolean, got {raw!r}")
    if isinstance(current, int):
        return int(raw)
    if isinstance(current, float):
        return float(raw)
    if isinstance(current, tuple):
        parts = [p.strip() for p in raw.split(",") if p.strip()]
        elem = float if any("." in p for p in parts) else int
        if current and isinstance(current[0], float):
            elem = float
        return tuple(elem(p) for p in parts)
    if current is None:  # scarcity_rate
        return float(raw)
    return raw


def load_run_config(path=None) -> RunConfig:
    cfg = RunConfig()
    if path is None:
        return cfg
    parser = configparser.ConfigParser()
    read = parser.read(path)
    if not read:
        raise ConfigError(f"cannot read config file: {path}")
    sections = {"graph": cfg.graph, "model": cfg.model, "train": cfg.train,
                "split": cfg.split}
    for section in parser.sections():
        if section not in sections:
            raise ConfigError(f"unknown config section: [{section}]")
        target = sections[section]
        known = {f.name for f in fields(target)}
        for key, raw in parser.items(section):
            if key not in known:
                raise ConfigError(f"unknown key in [{section}]: {key}")
            try:
                value = _coerce(section, key, raw, getattr(target, key))
            except ValueError as exc:
                raise ConfigError(f"[{section}] {key}: {exc}") from None
            setattr(target, key, value)
    cfg.model.validate()
    cfg.train.validate()
    cfg.split.validate()
    return cfg
