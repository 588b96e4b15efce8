"""Configuration and fitted-model containers shared by the SVM and the networks."""

from __future__ import annotations

from dataclasses import dataclass, field
from types import MappingProxyType
from typing import Mapping, Optional

import numpy as np

from ..errors import ConfigError, ValidationError

NN_KINDS = ("FCN", "LSTM", "CNN")
KINDS = ("SVM",) + NN_KINDS


@dataclass(frozen=True)
class SvmConfig:
    C: float = 1.0
    kernel: str = "rbf"
    # None selects 1 / (n_features * variance of the training matrix)
    gamma: Optional[float] = None
    tol: float = 1e-3
    max_passes: int = 200

    def __post_init__(self):
        if not self.C > 0:
            raise ConfigError(f"C must be > 0, got {self.C}")
        if self.kernel not in ("rbf", "linear"):
            raise ConfigError(f"unknown kernel {self.kernel!r}")
        if self.gamma is not None and not self.gamma > 0:
            raise ConfigError(f"gamma must be > 0, got {self.gamma}")
        if not self.tol > 0 or self.max_passes < 1:
            raise ConfigError("tol must be > 0 and max_passes >= 1")


@dataclass(frozen=True)
class ArchConfig:
    kind: str = "FCN"
    hidden: tuple = (64, 64)
    conv_channels: tuple = (16, 32)
    conv_kernel: int = 7
    lstm_units: int = 32
    lstm_step: int = 8
    learning_rate: float = 1e-3
    batch_size: int = 32
    epochs: int = 100
    seed: int = 0
    # scale each input channel to zero mean, unit variance over the training set
    standardize: bool = True

    def __post_init__(self):
        kind = str(self.kind).upper()
        if kind not in NN_KINDS:
            raise ConfigError(f"unknown network kind {self.kind!r}")
        object.__setattr__(self, "kind", kind)
        sizes = (*self.hidden, *self.conv_channels, self.conv_kernel, self.lstm_units,
                 self.lstm_step, self.batch_size)
        if any(int(v) != v or v < 1 for v in sizes):
            raise ConfigError("layer sizes, step and batch size must be positive integers")
        if self.epochs < 1:
            raise ConfigError(f"epochs must be >= 1, got {self.epochs}")
        if not self.learning_rate > 0:
            raise ConfigError("learning_rate must be > 0")


@dataclass(frozen=True)
class InputSpec:
    shape: tuple
    modalities: tuple
    n_classes: int

    def check(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        if x.shape[1:] != tuple(self.shape):
            raise ValidationError(
                f"input rows have shape {x.shape[1:]}, model expects {tuple(self.shape)}"
            )
        if not np.all(np.isfinite(x)):
            raise ValidationError("input contains non-finite values")
        return x


def _freeze(params: Mapping[str, np.ndarray]) -> Mapping[str, np.ndarray]:
    frozen = {}
    for k, v in params.items():
        a = np.array(v, dtype=np.float64, copy=True)
        a.setflags(write=False)
        frozen[k] = a
    return MappingProxyType(frozen)


@dataclass(frozen=True)
class TrainedModel:
    """A fitted classifier. Parameter arrays are read-only copies."""

    kind: str
    params: Mapping[str, np.ndarray]
    input_spec: InputSpec
    config: object = None
    history: tuple = ()
    info: Mapping = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValidationError(f"unknown model kind {self.kind!r}")
        object.__setattr__(self, "params", _freeze(self.params))
        object.__setattr__(self, "history", tuple(float(h) for h in self.history))
        object.__setattr__(self, "info", MappingProxyType(dict(self.info)))

    @property
    def n_classes(self) -> int:
        return self.input_spec.n_classes

    def param_bytes(self) -> bytes:
        """Canonical byte string of all parameters (sorted by name)."""
        return b"".join(
            k.encode() + np.ascontiguousarray(self.params[k], dtype="<f8").tobytes()
            for k in sorted(self.params)
        )
