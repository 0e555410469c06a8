"""Training configuration and the flat ``key=value`` config-file format."""

from __future__ import annotations

import dataclasses
import os
from dataclasses import dataclass

from .tasks import TASKS


class ConfigError(ValueError):
    pass


def _is_pow2(n: int) -> bool:
    return n >= 1 and n & (n - 1) == 0


@dataclass
class TrainConfig:
    task: str = "transpose"
    m: int = 48
    B: int = 2
    flatten_kind: str = "zorder"
    min_train_size: int = 4
    max_train_size: int = 16
    eval_sizes: tuple[int, ...] = (4, 8, 16, 32)
    steps: int = 30000
    batch_size: int = 32
    learning_rate: float = 1e-4
    seed: int = 0
    recurrent_steps: int = 1
    eval_recurrent_steps: int = 1
    eval_instances: int = 64
    eval_seed: int = 1234
    log_every: int = 100
    checkpoint_every: int = 10000
    patience: int = 0
    data_path: str = ""
    augment: bool = True
    workers: int = 0

    def __post_init__(self):
        self.eval_sizes = tuple(int(s) for s in self.eval_sizes)
        self.validate()

    def validate(self) -> None:
        if self.task not in TASKS:
            raise ConfigError(f"unknown task {self.task!r}; choose from {', '.join(TASKS)}")
        if self.flatten_kind not in ("zorder", "raster"):
            raise ConfigError("flatten_kind must be 'zorder' or 'raster'")
        if self.m < 1 or self.B < 1:
            raise ConfigError("m and B must be positive")
        if self.batch_size < 1:
            raise ConfigError("batch_size must be >= 1")
        if self.steps < 0:
            raise ConfigError("steps must be >= 0")
        if self.recurrent_steps < 1 or self.eval_recurrent_steps < 1:
            raise ConfigError("recurrent step counts must be >= 1")
        for size in (self.min_train_size, self.max_train_size, *self.eval_sizes):
            if size < 2 or not _is_pow2(size):
                raise ConfigError(f"size {size} is not a power of two >= 2")
        if self.min_train_size > self.max_train_size:
            raise ConfigError("min_train_size exceeds max_train_size")

    @property
    def train_sizes(self) -> list[int]:
        if self.task == "sudoku":
            return [16]
        sizes, s = [], self.min_train_size
        while s <= self.max_train_size:
            sizes.append(s)
            s *= 2
        return sizes

    def to_items(self) -> list[tuple[str, str]]:
        out = []
        for f in dataclasses.fields(self):
            value = getattr(self, f.name)
            if isinstance(value, tuple):
                value = ",".join(str(v) for v in value)
            elif isinstance(value, bool):
                value = "true" if value else "false"
            elif isinstance(value, float):
                value = repr(value)
            out.append((f.name, str(value)))
        return out

    def dumps(self) -> str:
        return "".join(f"{k}={v}\n" for k, v in self.to_items())

    @classmethod
    def from_items(cls, items: dict[str, str], base: "TrainConfig | None" = None) -> "TrainConfig":
        values = dataclasses.asdict(base if base is not None else cls())
        for key, raw in items.items():
            if key not in values:
                raise ConfigError(f"unknown config key {key!r}")
            values[key] = _coerce(key, raw, values[key])
        return cls(**values)


def _coerce(key: str, raw, default):
    if not isinstance(raw, str):
        return raw
    raw = raw.strip()
    try:
        if isinstance(default, bool):
            if raw.lower() not in ("true", "false", "1", "0", "yes", "no"):
                raise ValueError(raw)
            return raw.lower() in ("true", "1", "yes")
        if isinstance(default, int):
            return int(raw)
        if isinstance(default, float):
            return float(raw)
        if isinstance(default, tuple):
            return tuple(int(v) for v in raw.split(",") if v.strip())
    except ValueError:
        raise ConfigError(f"bad value for {key}: {raw!r}") from None
    return raw


def read_config_file(path: str | os.PathLike) -> dict[str, str]:
    """Parse ``key=value`` lines; ``#`` starts a comment."""
    items: dict[str, str] = {}
    with open(path) as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            key, sep, value = line.partition("=")
            if not sep:
                raise ConfigError(f"{path}:{lineno}: expected key=value")
            items[key.strip()] = value.strip()
    return items
