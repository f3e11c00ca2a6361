"""Framework defaults that the training recipe leaves unstated.

Everything here mirrors the usual Keras defaults and lives in one record so
it can be revised in one place.
"""
from dataclasses import asdict, dataclass

import numpy as np


@dataclass(frozen=True)
class EngineDefaults:
    bn_epsilon: float = 1e-3
    bn_momentum: float = 0.99
    elu_alpha: float = 1.0
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_epsilon: float = 1e-7
    train_dtype: str = "float32"
    check_dtype: str = "float64"

    def to_dict(self):
        return asdict(self)


DEFAULTS = EngineDefaults()


class ShapeError(ValueError):
    """Operand shapes do not agree with a layer or op contract."""


class ConfigError(ValueError):
    """A layer or model configuration is invalid."""


class NumericError(FloatingPointError):
    """NaN or Inf appeared in a forward or backward pass."""


def as_dtype(dtype):
    dtype = np.dtype(dtype)
    if dtype not in (np.float32, np.float64):
        raise ConfigError(f"unsupported dtype {dtype}; use float32 or float64")
    return dtype
