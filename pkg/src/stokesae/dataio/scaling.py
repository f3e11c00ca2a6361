"""Per-profile scaling of Stokes I (min-max) and Stokes V (largest absolute extremum).

All functions work on the last axis, so a single profile ``(112,)`` and a
batch ``(n, 112)`` are handled alike.
"""
from dataclasses import dataclass

import numpy as np

I_RANGE = (0.0, 1.0)


class DegenerateProfileError(ValueError):
    pass


@dataclass
class ScalingParams:
    """Scaling parameters for one or many profiles (arrays broadcast over profiles)."""

    i_min: np.ndarray
    i_max: np.ndarray
    v_div: np.ndarray
    a: float = I_RANGE[0]
    b: float = I_RANGE[1]

    def __len__(self):
        return int(np.size(self.i_min))

    def __getitem__(self, idx):
        return ScalingParams(self.i_min[idx], self.i_max[idx], self.v_div[idx], self.a, self.b)


def scale_i(profile, a=I_RANGE[0], b=I_RANGE[1]):
    """Min-max scale to ``[a, b]``; returns ``(scaled, (min, max))``."""
    x = np.asarray(profile, dtype=np.float64)
    lo = x.min(axis=-1, keepdims=True)
    hi = x.max(axis=-1, keepdims=True)
    if np.any(hi <= lo):
        raise DegenerateProfileError("Stokes I profile is constant; min-max scaling undefined")
    return (b - a) * (x - lo) / (hi - lo) + a, (lo[..., 0], hi[..., 0])


def v_divisor(profile):
    x = np.asarray(profile, dtype=np.float64)
    hi = np.abs(x.max(axis=-1))
    lo = np.abs(x.min(axis=-1))
    return np.where(hi >= lo, hi, lo)


def scale_v(profile):
    """Divide by ``|max|`` when ``|max| >= |min|`` and by ``|min|`` otherwise; returns ``(scaled, divisor)``."""
    x = np.asarray(profile, dtype=np.float64)
    div = v_divisor(x)
    if np.any(div == 0):
        raise DegenerateProfileError("Stokes V profile is identically zero")
    return x / np.expand_dims(div, -1), div


def unscale_i(scaled, i_min, i_max, a=I_RANGE[0], b=I_RANGE[1]):
    x = np.asarray(scaled, dtype=np.float64)
    lo = np.expand_dims(np.asarray(i_min, dtype=np.float64), -1)
    hi = np.expand_dims(np.asarray(i_max, dtype=np.float64), -1)
    return (x - a) / (b - a) * (hi - lo) + lo


def unscale_v(scaled, v_div):
    return np.asarray(scaled, dtype=np.float64) * np.expand_dims(np.asarray(v_div, dtype=np.float64), -1)


def scale_profiles(profiles):
    """Scale ``(n, 112, 2)`` I/V profiles; returns ``(scaled float64, ScalingParams)``."""
    profiles = np.asarray(profiles)
    si, (lo, hi) = scale_i(profiles[..., 0])
    sv, div = scale_v(profiles[..., 1])
    return np.stack([si, sv], axis=-1), ScalingParams(lo, hi, div)


def unscale(profiles, params):
    """Invert :func:`scale_profiles` for ``(n, 112, 2)`` profiles with matching params."""
    profiles = np.asarray(profiles)
    n = profiles.shape[0] if profiles.ndim == 3 else 1
    if len(params) != n:
        raise ValueError(f"{len(params)} scaling parameter sets for {n} profiles")
    i = unscale_i(profiles[..., 0], params.i_min, params.i_max, params.a, params.b)
    v = unscale_v(profiles[..., 1], params.v_div)
    return np.stack([i, v], axis=-1)


def degenerate_mask(profiles):
    """``True`` for profiles with constant I or all-zero V."""
    profiles = np.asarray(profiles)
    i = profiles[..., 0]
    return (i.max(axis=-1) <= i.min(axis=-1)) | (v_divisor(profiles[..., 1]) == 0)
