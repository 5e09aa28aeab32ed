"""Classifier configuration: the searchable hyperparameter surface."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, fields
from pathlib import Path

from ..errors import ConfigError

POOLINGS = ("mask_weighted_mean", "learnable_attention")
POSITIONAL_ENCODINGS = ("sinusoidal", "learned", "none")
NORMALIZATIONS = ("pre_norm", "post_norm")
LR_SCHEDULES = ("constant", "cosine_decay", "step_decay")

# step_decay halves the learning rate every STEP_DECAY_EVERY epochs.
STEP_DECAY_EVERY = 50
STEP_DECAY_FACTOR = 0.5


@dataclass
class ClassifierConfig:
    input_dim: int
    use_projection: bool = False
    projection_dim: int = 256
    num_layers: int = 1
    num_heads: int = 4
    hidden_dim: int = 128
    dropout: float = 0.1
    weight_decay: float = 1e-4
    learning_rate: float = 1e-3
    batch_size: int = 16
    pooling: str = "mask_weighted_mean"
    positional_encoding: str = "sinusoidal"
    normalization: str = "pre_norm"
    lr_schedule: str = "constant"
    max_epochs: int = 200
    patience: int = 15
    seed: int = 0

    @property
    def width(self) -> int:
        return self.projection_dim if self.use_projection else self.input_dim

    def validate(self) -> None:
        counts = {
            "input_dim": self.input_dim,
            "projection_dim": self.projection_dim,
            "num_layers": self.num_layers,
            "num_heads": self.num_heads,
            "hidden_dim": self.hidden_dim,
            "batch_size": self.batch_size,
            "max_epochs": self.max_epochs,
            "patience": self.patience,
        }
        for name, value in counts.items():
            if value < 1:
                raise ConfigError(f"{name} must be >= 1, got {value}")
        if self.width % self.num_heads != 0:
            raise ConfigError(
                f"model width {self.width} not divisible by num_heads {self.num_heads}"
            )
        if not 0.0 <= self.dropout < 1.0:
            raise ConfigError(f"dropout must be in [0, 1), got {self.dropout}")
        if not self.learning_rate > 0:
            raise ConfigError(f"learning_rate must be > 0, got {self.learning_rate}")
        if self.weight_decay < 0:
            raise ConfigError(f"weight_decay must be >= 0, got {self.weight_decay}")
        for name, value, allowed in (
            ("pooling", self.pooling, POOLINGS),
            ("positional_encoding", self.positional_encoding, POSITIONAL_ENCODINGS),
            ("normalization", self.normalization, NORMALIZATIONS),
            ("lr_schedule", self.lr_schedule, LR_SCHEDULES),
        ):
            if value not in allowed:
                raise ConfigError(f"{name} must be one of {allowed}, got {value!r}")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "ClassifierConfig":
        names = {f.name for f in fields(cls)}
        unknown = set(d) - names
        if unknown:
            raise ConfigError(f"unknown config fields: {sorted(unknown)}")
        cfg = cls(**d)
        cfg.validate()
        return cfg

    @classmethod
    def from_json_file(cls, path: str | Path) -> "ClassifierConfig":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))

    def to_json_file(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2) + "\n", encoding="utf-8")
