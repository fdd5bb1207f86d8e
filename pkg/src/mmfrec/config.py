from __future__ import annotations

import enum
import math
from dataclasses import asdict, dataclass, fields, replace

from .errors import ConfigError


class Variant(str, enum.Enum):
    """Which weight families of the MMF model are trainable."""

    BASE = "base"
    OMEGA = "base+omega"
    THETA = "base+theta"
    FULL = "full"

    @property
    def trains_omega(self) -> bool:
        return self in (Variant.OMEGA, Variant.FULL)

    @property
    def trains_theta(self) -> bool:
        return self in (Variant.THETA, Variant.FULL)

    @classmethod
    def parse(cls, value) -> Variant:
        if isinstance(value, cls):
            return value
        aliases = {"mmf": cls.FULL, "base+omega+theta": cls.FULL, "omega": cls.OMEGA, "theta": cls.THETA}
        key = str(value).strip().lower()
        if key in aliases:
            return aliases[key]
        try:
            return cls(key)
        except ValueError:
            raise ConfigError(f"unknown variant {value!r}") from None


@dataclass(frozen=True)
class TrainConfig:
    """Hyperparameters shared by MF and MMF training.

    ``lam`` scales the Frobenius penalty on user and item/attribute latent
    matrices. ``lam_weights`` optionally pulls the MMF weights towards 1;
    it is 0 by default so the weights are unpenalized.
    """

    dim: int = 10
    lam: float = 0.05
    learning_rate: float = 0.01
    epochs: int = 30
    batch: int = 1
    seed: int = 0
    clamp_eval: bool = False
    lam_weights: float = 0.0
    shuffle: bool = True

    def __post_init__(self):
        if not isinstance(self.dim, int) or self.dim < 1:
            raise ConfigError("dim must be a positive integer")
        if not isinstance(self.epochs, int) or self.epochs < 0:
            raise ConfigError("epochs must be a non-negative integer")
        if not isinstance(self.batch, int) or self.batch < 1:
            raise ConfigError("batch must be a positive integer")
        if not isinstance(self.seed, int) or not 0 <= self.seed < 2**64:
            raise ConfigError("seed must be a 64-bit unsigned integer")
        for name in ("lam", "learning_rate", "lam_weights"):
            v = getattr(self, name)
            if not isinstance(v, (int, float)) or not math.isfinite(v) or v < 0:
                raise ConfigError(f"{name} must be a finite non-negative number")
        # zero learning rate is accepted: it yields the initialization unchanged

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d) -> TrainConfig:
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown training options: {sorted(unknown)}")
        return cls(**d)

    def replace(self, **changes) -> TrainConfig:
        return replace(self, **changes)
