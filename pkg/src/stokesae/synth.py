"""Synthetic Stokes I/V profiles and frames.

Each profile carries two Gaussian absorption lines in I and the wavelength
derivative of the same line shapes in V, giving two lobes per line:

    g_l(k) = exp(-(k - c_l)^2 / (2 w_l^2))
    I(k) = C * (1 - sum_l d_l g_l(k)) + noise
    V(k) = C * A * sum_l w_l g_l'(k) + noise

The ``w_l`` factor makes the V lobe peaks ``~0.61 * C * A`` independent of
the line width. Noise is Gaussian in counts.
"""
import os
from dataclasses import asdict, dataclass

import numpy as np

from .dataio.dataset import N_WAVELENGTHS, STOKES, SpectralCube, flatten_spatial
from .dataio.fits import write_fits
from .dataio.splits import Rect
from .engine import ConfigError

LEFT_CORE = (10, 45)
RIGHT_CORE = (60, 95)

# relative spreads at jitter = 1
_SPREAD = {"continuum": 0.05, "depth": 0.2, "width": 0.2, "v_amplitude": 0.5, "center": 2.0}


@dataclass(frozen=True)
class SynthParams:
    continuum: float = 10000.0
    depths: tuple = (0.55, 0.45)
    centers: tuple = (27.0, 77.0)
    widths: tuple = (2.5, 3.0)
    v_amplitude: float = 0.01
    sigma_i: float = 50.0
    sigma_v: float = 50.0
    seed: int = 0

    def __post_init__(self):
        if len(self.depths) != 2 or len(self.centers) != 2 or len(self.widths) != 2:
            raise ConfigError("depths, centers and widths need one value per line")
        if not all(0 <= d < 1 for d in self.depths):
            raise ConfigError(f"line depths must lie in [0, 1), got {self.depths}")
        if not all(w > 0 for w in self.widths):
            raise ConfigError(f"line widths must be positive, got {self.widths}")
        for c, (lo, hi) in zip(self.centers, (LEFT_CORE, RIGHT_CORE)):
            if not lo <= c <= hi:
                raise ConfigError(f"line center {c} outside core [{lo}, {hi}]")
        if self.continuum <= 0 or self.sigma_i < 0 or self.sigma_v < 0:
            raise ConfigError("continuum must be positive and noise levels non-negative")

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        for key in ("depths", "centers", "widths"):
            if key in d:
                d[key] = tuple(float(v) for v in d[key])
        return cls(**{k: v for k, v in d.items() if k in cls.__dataclass_fields__})


QUIET = SynthParams()
PLAGE = SynthParams(continuum=10500.0, depths=(0.5, 0.4), v_amplitude=0.05)
PENUMBRA = SynthParams(continuum=7000.0, depths=(0.45, 0.38), widths=(3.0, 3.4), v_amplitude=0.12)
UMBRA = SynthParams(continuum=3000.0, depths=(0.3, 0.25), widths=(3.4, 3.5), v_amplitude=0.2)


def _lines(continuum, depths, centers, widths, amplitude):
    """Noiseless profiles for per-profile parameter columns of shape ``(n,)`` / ``(n, 2)``."""
    k = np.arange(N_WAVELENGTHS, dtype=np.float64)
    u = (k[None, None, :] - centers[..., None]) / widths[..., None]
    g = np.exp(-0.5 * u ** 2)
    i = continuum[:, None] * (1.0 - np.sum(depths[..., None] * g, axis=1))
    # w * dg/dk = -u * g
    v = continuum[:, None] * amplitude[:, None] * np.sum(-u * g, axis=1)
    return i, v


def make_profile(params, rng=None, noise=True):
    """One profile ``(I, V)`` of length 112; noise comes from ``params.seed`` unless ``rng`` is given."""
    i, v = _lines(np.array([params.continuum]), np.array([params.depths]), np.array([params.centers]),
                  np.array([params.widths]), np.array([params.v_amplitude]))
    i, v = i[0], v[0]
    if noise:
        rng = np.random.default_rng(params.seed) if rng is None else rng
        i = i + rng.normal(0.0, params.sigma_i, N_WAVELENGTHS) if params.sigma_i > 0 else i
        v = v + rng.normal(0.0, params.sigma_v, N_WAVELENGTHS) if params.sigma_v > 0 else v
    return i, v


def sample_profiles(n, params, rng, jitter=0.0):
    """``n`` profiles with jittered parameters; returns ``(noisy, noiseless)`` arrays ``(n, 112, 2)``."""
    def spread(key, base, shape=()):
        if jitter == 0:
            return np.broadcast_to(np.asarray(base, dtype=np.float64), (n,) + shape).copy()
        return np.asarray(base) * (1.0 + jitter * _SPREAD[key] * rng.uniform(-1, 1, (n,) + shape))

    continuum = spread("continuum", params.continuum)
    depths = np.clip(spread("depth", params.depths, (2,)), 0.0, 0.95)
    widths = spread("width", params.widths, (2,))
    amplitude = spread("v_amplitude", params.v_amplitude)
    centers = np.broadcast_to(np.asarray(params.centers, dtype=np.float64), (n, 2)).copy()
    if jitter > 0:
        centers += jitter * _SPREAD["center"] * rng.uniform(-1, 1, (n, 2))
        centers = np.clip(centers, [LEFT_CORE[0], RIGHT_CORE[0]], [LEFT_CORE[1], RIGHT_CORE[1]])
        # magnetic polarity
        amplitude *= np.where(rng.random(n) < 0.5, -1.0, 1.0)
    i, v = _lines(continuum, depths, centers, widths, amplitude)
    clean = np.stack([i, v], axis=-1)
    noisy = clean.copy()
    if params.sigma_i > 0:
        noisy[..., 0] += rng.normal(0.0, params.sigma_i, (n, N_WAVELENGTHS))
    if params.sigma_v > 0:
        noisy[..., 1] += rng.normal(0.0, params.sigma_v, (n, N_WAVELENGTHS))
    return noisy, clean


def region_mask(frame, regions, background=None):
    """Integer map of region index per pixel (``len(regions)`` marks the background)."""
    ids = np.full(frame, -1, dtype=np.int64)
    for r, (rect, _) in enumerate(regions):
        rect = Rect.coerce(rect)
        if not rect.within(frame):
            raise ConfigError(f"region {rect.to_dict()} outside frame {frame}")
        box = ids[rect.y0:rect.y1, rect.x0:rect.x1]
        if np.any(box >= 0):
            raise ConfigError(f"region {rect.to_dict()} overlaps an earlier region")
        box[...] = r
    if np.any(ids < 0):
        if background is None:
            raise ConfigError("regions do not tile the frame and no background is given")
        ids[ids < 0] = len(regions)
    return ids


def make_frame(ny, nx, regions=(), seed=0, jitter=0.0, background=QUIET, stokes=STOKES,
               return_truth=False, chunk=65536):
    """Synthetic cube indexed ``[y, x, wavelength, stokes]`` with zero Q and U.

    ``regions`` is a sequence of ``(rect, SynthParams)``; uncovered pixels use
    ``background``. Every region draws from its own stream spawned from
    ``seed``, so results are reproducible. ``return_truth`` also returns the
    noiseless ``(ny, nx, 112, 2)`` I/V array.
    """
    if ny < 1 or nx < 1:
        raise ConfigError("frame extents must be positive")
    if jitter < 0:
        raise ConfigError("jitter must be non-negative")
    regions = list(regions)
    ids = region_mask((ny, nx), regions, background).ravel()
    params = [p for _, p in regions] + ([background] if background is not None else [])
    streams = np.random.SeedSequence(seed).spawn(len(params))
    data = np.zeros((ny * nx, N_WAVELENGTHS, len(stokes)), dtype=np.float32)
    truth = np.zeros((ny * nx, N_WAVELENGTHS, 2), dtype=np.float32) if return_truth else None
    ci, cv = stokes.index("I"), stokes.index("V")
    for r, (p, ss) in enumerate(zip(params, streams)):
        rng = np.random.default_rng(ss)
        where = np.flatnonzero(ids == r)
        for start in range(0, len(where), chunk):
            sel = where[start:start + chunk]
            noisy, clean = sample_profiles(len(sel), p, rng, jitter)
            data[sel, :, ci] = noisy[..., 0]
            data[sel, :, cv] = noisy[..., 1]
            if truth is not None:
                truth[sel] = clean
    cube = SpectralCube(data.reshape(ny, nx, N_WAVELENGTHS, len(stokes)), stokes,
                        [f"synthetic:{x}" for x in range(nx)], f"synthetic seed={seed}")
    if return_truth:
        return cube, truth.reshape(ny, nx, N_WAVELENGTHS, 2)
    return cube


def active_region(ny, nx):
    """Quiet-Sun frame with a plage strip and a sunspot (umbra inside a penumbra) on the right half."""
    cy, cx = ny // 2, (3 * nx) // 4
    py, px = max(ny // 4, 2), max(nx // 8, 2)
    uy, ux = max(py // 2, 1), max(px // 2, 1)
    penumbra = Rect(cy - py, cy + py, cx - px, cx + px)
    umbra = Rect(cy - uy, cy + uy, cx - ux, cx + ux)
    regions = [(umbra, UMBRA)]
    # the penumbra is four boxes around the umbra
    for rect in (Rect(penumbra.y0, umbra.y0, penumbra.x0, penumbra.x1),
                 Rect(umbra.y1, penumbra.y1, penumbra.x0, penumbra.x1),
                 Rect(umbra.y0, umbra.y1, penumbra.x0, umbra.x0),
                 Rect(umbra.y0, umbra.y1, umbra.x1, penumbra.x1)):
        regions.append((rect, PENUMBRA))
    plage_x1 = penumbra.x0
    plage_x0 = max(nx // 2, 0)
    if plage_x1 - plage_x0 >= 2:
        regions.append((Rect(0, max(ny // 6, 1), plage_x0, plage_x1), PLAGE))
    return regions


def make_dataset(ny, nx, seed=0, jitter=1.0, regions=None, background=QUIET):
    """Flattened synthetic dataset (unscaled) plus its noiseless I/V truth ``(n, 112, 2)``."""
    regions = active_region(ny, nx) if regions is None else regions
    cube, truth = make_frame(ny, nx, regions, seed=seed, jitter=jitter, background=background,
                             stokes="IV", return_truth=True)
    ds = flatten_spatial(cube)
    ds.meta.update({"synthetic": True, "seed": seed, "jitter": jitter})
    return ds, truth.reshape(-1, N_WAVELENGTHS, 2)


def write_scans(cube, directory, prefix="scan", bitpix=-32):
    """Write one FITS file per x column with numpy shape ``(4, ny, 112)``; returns the paths."""
    if bitpix not in (-32, -64):
        raise ConfigError(f"synthetic scans are floating point; bitpix must be -32 or -64, got {bitpix}")
    os.makedirs(directory, exist_ok=True)
    ny, nx = cube.frame
    width = max(4, len(str(nx - 1)))
    paths = []
    for x in range(nx):
        planes = np.zeros((4, ny, N_WAVELENGTHS), dtype=np.float32)
        for s, name in enumerate(cube.stokes):
            planes[STOKES.index(name)] = cube.data[:, x, :, s]
        path = os.path.join(directory, f"{prefix}_{x:0{width}d}.fits")
        data = planes if bitpix == -32 else planes.astype(np.float64)
        header = {"DATE_OBS": cube.timestamp, "SLITPOS": x}
        with open(path, "wb") as fh:
            fh.write(write_fits(data, header, bitpix=bitpix))
        paths.append(path)
    return paths


def frame_from_dataset(ds):
    """Inverse of :func:`flatten_spatial` for complete, unscaled datasets (Q/U set to zero)."""
    if ds.scaling is not None or len(ds) != ds.frame[0] * ds.frame[1]:
        raise ConfigError("need a complete unscaled dataset")
    ny, nx = ds.frame
    data = np.zeros((ny, nx, N_WAVELENGTHS, 4), dtype=np.float32)
    data[ds.origins[:, 0], ds.origins[:, 1], :, 0] = ds.profiles[..., 0]
    data[ds.origins[:, 0], ds.origins[:, 1], :, 3] = ds.profiles[..., 1]
    return SpectralCube(data, STOKES, [], ds.meta.get("timestamp", ""))

