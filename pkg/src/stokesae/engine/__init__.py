"""Minimal numpy neural-network engine: ops, layers, reverse-mode gradients, Adam."""
from .config import DEFAULTS, ConfigError, NumericError, ShapeError
from .graph import GradCheckResult, Loss, Network, backward, gradient_check, projection_loss
from .kernels import BACKEND
from .layers import KINDS, LayerSpec, Parameter
from .optim import Adam
from .serialize import FormatError, load_weights, save_weights

__all__ = [
    "Adam", "BACKEND", "ConfigError", "DEFAULTS", "FormatError", "GradCheckResult", "KINDS",
    "LayerSpec", "Loss", "Network", "NumericError", "Parameter", "ShapeError", "backward",
    "gradient_check", "load_weights", "projection_loss", "save_weights",
]
