"""Experiment configuration: one flat, JSON-serializable record."""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Any


class ConfigError(ValueError):
    pass


@dataclass
class ExperimentConfig:
    """Every knob of a run.

    ``gamma`` weights the link-prediction regularizer in node classification:
    the loss is ``(1 - gamma) * L_nc + gamma * L_lp``, so ``gamma = 0`` is pure
    classification and ``gamma = 1`` pure link prediction.
    """

    task: str = "lp"  # lp | nc
    model: str = "tb"  # tb | baseline
    dim_base: int = 64
    dim_fiber: int = 64
    num_layers: int = 2
    final_relu: bool = False  # ReLU on the last encoder layer too
    lr: float = 0.01
    weight_decay: float = 0.0
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    dropconnect_p: float = 0.0
    r: float = 2.0
    t: float = 1.0
    gamma: float = 0.5
    nc_decoder: str = "sub"  # sub | div | mul
    max_epochs: int = 15000
    patience: int = 1000
    split_seed: int = 1234
    model_seed: int = 1234
    lp_fractions: tuple[float, float, float] = (0.85, 0.05, 0.10)
    nc_fractions: tuple[float, float, float] = (0.70, 0.15, 0.15)
    multi_view: bool = False

    def __post_init__(self):
        self.lp_fractions = tuple(float(f) for f in self.lp_fractions)
        self.nc_fractions = tuple(float(f) for f in self.nc_fractions)
        self.validate()

    def validate(self) -> None:
        checks = [
            (self.task in ("lp", "nc"), f"task must be lp or nc, got {self.task!r}"),
            (self.model in ("tb", "baseline"), f"model must be tb or baseline, got {self.model!r}"),
            (self.nc_decoder in ("sub", "div", "mul"), f"nc_decoder must be sub, div or mul, got {self.nc_decoder!r}"),
            (self.dim_base > 0 and self.dim_fiber > 0, "dimensions must be positive"),
            (self.num_layers >= 1, "num_layers must be >= 1"),
            (0.0 <= self.gamma <= 1.0, f"gamma must lie in [0, 1], got {self.gamma}"),
            (0.0 <= self.dropconnect_p < 1.0, "dropconnect_p must lie in [0, 1)"),
            (self.r > 0 and self.t > 0, "r and t must be positive"),
            (self.lr > 0, "lr must be positive"),
            (self.max_epochs >= 0 and self.patience >= 1, "max_epochs >= 0 and patience >= 1 required"),
        ]
        for fr in (self.lp_fractions, self.nc_fractions):
            checks.append((len(fr) == 3 and min(fr) >= 0 and abs(sum(fr) - 1.0) < 1e-9,
                           f"split fractions must be three non-negative numbers summing to 1, got {fr}"))
        if self.task == "nc" and self.model == "tb":
            checks.append((self.dim_base == self.dim_fiber,
                           "node classification needs equal base and fiber dimensions"))
        for ok, msg in checks:
            if not ok:
                raise ConfigError(msg)

    def to_dict(self) -> dict[str, Any]:
        d = dataclasses.asdict(self)
        d["lp_fractions"] = list(self.lp_fractions)
        d["nc_fractions"] = list(self.nc_fractions)
        return d

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "ExperimentConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(sorted(unknown))}")
        return cls(**d)

    @classmethod
    def load(cls, path: str | Path) -> "ExperimentConfig":
        return cls.from_dict(json.loads(Path(path).read_text()))

    def replace(self, **changes) -> "ExperimentConfig":
        return dataclasses.replace(self, **changes)
