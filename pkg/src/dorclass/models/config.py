from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass

FAMILIES = ("dct", "rf", "et", "mlp")


class ConfigError(ValueError):
    pass


@dataclass
class TrainConfig:
    family: str = "mlp"
    seed: int = 0
    threshold: float = 0.5
    # trees
    max_depth: int | None = None
    min_samples_split: int = 2
    min_samples_leaf: int = 1
    n_trees: int = 100
    max_features: str | int | float | None = "sqrt"
    bootstrap: bool | None = None
    n_jobs: int = 1
    # mlp
    hidden: tuple[int, ...] = (512,)
    learning_rate: float = 1e-3
    batch_size: int = 256
    epochs: int = 30
    patience: int = 5
    beta: float = 1.0
    dtype: str = "float32"

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ConfigError(f"unknown model family {self.family!r}")
        if not 0.0 < self.threshold < 1.0:
            raise ConfigError("threshold must lie in (0, 1)")
        self.hidden = tuple(int(h) for h in self.hidden)

    def replace(self, **changes) -> "TrainConfig":
        return dataclasses.replace(self, **changes)

    def to_json(self) -> dict:
        out = dataclasses.asdict(self)
        out["hidden"] = list(self.hidden)
        return out

    @classmethod
    def from_json(cls, obj: dict) -> "TrainConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(obj) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        return cls(**obj)

    def dumps(self) -> str:
        return json.dumps(self.to_json(), sort_keys=True)
