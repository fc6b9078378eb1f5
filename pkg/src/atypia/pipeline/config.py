"""Engine configuration: every tunable in one validated record."""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass

from ..exceptions import ConfigError
from ..reasoning import SHIFT_METHODS
from ..surprise import VARIANTS

_U64 = 2**64


@dataclass(frozen=True)
class EngineConfig:
    grid_size: int = 8
    smoothing: float = 0.5
    entropy_floor: float = 0.05
    clamp_max: float = 30.0
    shift_eps: float = 1e-3
    shift_method: str = "profile"
    decision_threshold: float = 0.95
    holdout_fraction: float = 0.2
    seed: int = 0
    ablation: str = "full"

    def __post_init__(self):
        checks = [
            (isinstance(self.grid_size, int) and not isinstance(self.grid_size, bool)
             and 1 <= self.grid_size <= 256, "grid_size must be an integer in [1, 256]"),
            (self.smoothing > 0, "smoothing must be positive"),
            (self.entropy_floor > 0, "entropy_floor must be positive"),
            (self.clamp_max > 0, "clamp_max must be positive"),
            (self.shift_eps > 0, "shift_eps must be positive"),
            (self.shift_method in SHIFT_METHODS, f"shift_method must be one of {SHIFT_METHODS}"),
            (0 < self.decision_threshold < 1, "decision_threshold must lie in (0, 1)"),
            (0 <= self.holdout_fraction < 1, "holdout_fraction must lie in [0, 1)"),
            (isinstance(self.seed, int) and not isinstance(self.seed, bool)
             and 0 <= self.seed < _U64, "seed must be an unsigned 64-bit integer"),
            (self.ablation in VARIANTS, f"ablation must be one of {sorted(VARIANTS)}"),
        ]
        for ok, message in checks:
            if not ok:
                raise ConfigError(message)

    def to_dict(self):
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, d):
        if not isinstance(d, dict):
            raise ConfigError("configuration must be a JSON object")
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = sorted(set(d) - known)
        if unknown:
            raise ConfigError(f"unknown configuration keys: {unknown}")
        try:
            return cls(**d)
        except TypeError as exc:
            raise ConfigError(str(exc)) from None

    @classmethod
    def from_file(cls, path):
        try:
            with open(path, encoding="utf-8") as fh:
                data = json.load(fh)
        except OSError as exc:
            raise ConfigError(f"cannot read configuration {path}: {exc.strerror}") from None
        except json.JSONDecodeError as exc:
            raise ConfigError(f"configuration {path} is not valid JSON: {exc.msg}") from None
        return cls.from_dict(data)

    def replace(self, **overrides):
        """Copy with the given fields changed; ``None`` values are ignored."""
        changes = {k: v for k, v in overrides.items() if v is not None}
        try:
            return dataclasses.replace(self, **changes)
        except TypeError as exc:
            raise ConfigError(str(exc)) from None
