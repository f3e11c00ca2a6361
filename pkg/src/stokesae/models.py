"""Deep (DAE) and 1D-convolutional (CAE) autoencoders for paired Stokes I/V profiles.

Profiles are handled as ``(n, 112, 2)`` arrays with Stokes I in channel 0 and
Stokes V in channel 1. The DAE sees the same data flattened to 224 values,
all I points followed by all V points.
"""
import warnings
from dataclasses import dataclass

import numpy as np

from .engine import ConfigError, LayerSpec, Network, ShapeError
from .engine.serialize import load_weights, save_weights

N_WAVELENGTHS = 112
N_STOKES = 2
PROFILE_SHAPE = (N_WAVELENGTHS, N_STOKES)
FLAT_SIZE = N_WAVELENGTHS * N_STOKES
DEFAULT_BOTTLENECK = 28
BOTTLENECK_SWEEP = (7, 14, 28, 56, 112)
KINDS = ("DAE", "CAE")

# Scaled I lives in [0, 1]; anything far outside hints at unscaled counts.
_I_GUARD = (-0.2, 1.2)


def _check_bottleneck(bottleneck):
    if not isinstance(bottleneck, (int, np.integer)) or not 1 <= bottleneck <= FLAT_SIZE:
        raise ConfigError(f"bottleneck must be an integer in [1, {FLAT_SIZE}], got {bottleneck!r}")


def dae_layers(bottleneck=DEFAULT_BOTTLENECK):
    """Dense448/224/112 + BN + ELU encoder, linear bottleneck, mirrored decoder, linear 224 output."""
    _check_bottleneck(bottleneck)
    specs = []
    for width in (448, 224, 112):
        specs += [LayerSpec("dense", units=width), LayerSpec("batchnorm"), LayerSpec("elu")]
    specs.append(LayerSpec("dense", units=int(bottleneck)))
    bottleneck_index = len(specs) - 1
    for width in (112, 224, 448):
        specs += [LayerSpec("dense", units=width), LayerSpec("batchnorm"), LayerSpec("elu")]
    specs.append(LayerSpec("dense", units=FLAT_SIZE))
    return specs, bottleneck_index


def cae_layers(bottleneck=DEFAULT_BOTTLENECK, kernel=7):
    """Conv + ELU + BN blocks with max/max/avg pooling, linear bottleneck, upsampling deconv decoder."""
    _check_bottleneck(bottleneck)
    specs = []
    for filters, pool in ((64, "maxpool1d"), (32, "maxpool1d"), (16, "avgpool1d")):
        specs += [
            LayerSpec("conv1d", units=filters, kernel=kernel),
            LayerSpec("elu"),
            LayerSpec("batchnorm"),
            LayerSpec(pool, factor=2),
        ]
    specs += [LayerSpec("flatten"), LayerSpec("dense", units=int(bottleneck))]
    bottleneck_index = len(specs) - 1
    specs += [LayerSpec("dense", units=224), LayerSpec("reshape", target=(14, 16))]
    for filters in (16, 32, 64):
        specs += [
            LayerSpec("upsample1d", factor=2),
            LayerSpec("conv1d_transpose", units=filters, kernel=kernel),
            LayerSpec("elu"),
            LayerSpec("batchnorm"),
        ]
    specs += [LayerSpec("conv1d_transpose", units=N_STOKES, kernel=kernel), LayerSpec("elu")]
    return specs, bottleneck_index


def build_dae(bottleneck=DEFAULT_BOTTLENECK, seed=0, dtype="float32"):
    specs, b = dae_layers(bottleneck)
    return Network(specs, (FLAT_SIZE,), bottleneck_index=b, seed=seed, dtype=dtype, name=f"DAE-{bottleneck}")


def build_cae(bottleneck=DEFAULT_BOTTLENECK, seed=0, dtype="float32"):
    specs, b = cae_layers(bottleneck)
    return Network(specs, PROFILE_SHAPE, bottleneck_index=b, seed=seed, dtype=dtype, name=f"CAE-{bottleneck}")


def to_flat(profiles):
    """``(n, 112, 2)`` -> ``(n, 224)`` with the I block first."""
    profiles = np.asarray(profiles)
    return np.ascontiguousarray(profiles.transpose(0, 2, 1)).reshape(len(profiles), FLAT_SIZE)


def from_flat(flat):
    flat = np.asarray(flat)
    return np.ascontiguousarray(flat.reshape(len(flat), N_STOKES, N_WAVELENGTHS).transpose(0, 2, 1))


@dataclass
class Autoencoder:
    """A built graph plus the layout conversions its kind needs."""

    kind: str
    bottleneck: int
    network: Network

    @classmethod
    def build(cls, kind, bottleneck=DEFAULT_BOTTLENECK, seed=0, dtype="float32"):
        kind = kind.upper()
        if kind == "DAE":
            net = build_dae(bottleneck, seed=seed, dtype=dtype)
        elif kind == "CAE":
            net = build_cae(bottleneck, seed=seed, dtype=dtype)
        else:
            raise ConfigError(f"model kind must be one of {KINDS}, got {kind!r}")
        return cls(kind, int(bottleneck), net)

    @property
    def param_count(self):
        return self.network.param_count

    def to_input(self, profiles):
        profiles = np.asarray(profiles)
        if profiles.ndim != 3 or profiles.shape[1:] != PROFILE_SHAPE:
            raise ShapeError(f"profiles must have shape (n, 112, 2), got {profiles.shape}")
        return to_flat(profiles) if self.kind == "DAE" else profiles

    def from_output(self, out):
        return from_flat(out) if self.kind == "DAE" else out

    def encode(self, profiles):
        """Latent vectors ``(n, bottleneck)`` for scaled profiles (inference mode)."""
        profiles = np.asarray(profiles)
        if profiles.size and (profiles[..., 0].min() < _I_GUARD[0] or profiles[..., 0].max() > _I_GUARD[1]):
            warnings.warn("Stokes I outside [-0.2, 1.2]; were the profiles scaled?", stacklevel=2)
        return self.network.encode(self.to_input(profiles))

    def decode(self, latents):
        """Scaled ``(n, 112, 2)`` reconstructions from latent vectors."""
        latents = np.asarray(latents)
        if latents.ndim != 2 or latents.shape[1] != self.bottleneck:
            raise ShapeError(f"latents must have shape (n, {self.bottleneck}), got {latents.shape}")
        return self.from_output(self.network.decode(latents))

    def reconstruct(self, profiles):
        return self.decode(self.encode(profiles))

    def describe(self):
        lines = [f"{self.kind} bottleneck={self.bottleneck} parameters={self.param_count}",
                 f"{'#':>3}  {'layer':<18}{'input':<14}{'output':<14}{'params':>8}"]
        for i, label, shp_in, shp_out, n in self.network.shape_trace():
            lines.append(f"{i:>3}  {label:<18}{str(shp_in):<14}{str(shp_out):<14}{n:>8}")
        return "\n".join(lines)

    def meta(self):
        return {"kind": self.kind, "bottleneck": self.bottleneck, "param_count": self.param_count}

    def save(self, path, **meta):
        save_weights(path, self.network, {**self.meta(), **meta})

    @classmethod
    def load(cls, path):
        """Load a model; the parameter count is re-derived from kind and bottleneck and must match."""
        net, meta = load_weights(path)
        model = cls(meta["kind"], int(meta["bottleneck"]), net)
        expected = cls.build(meta["kind"], meta["bottleneck"]).param_count
        if model.param_count != expected or meta.get("param_count") != expected:
            raise ConfigError(f"{path}: parameter count does not match a {meta['kind']}-{meta['bottleneck']}")
        return model, meta
