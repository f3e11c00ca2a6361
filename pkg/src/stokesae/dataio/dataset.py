"""Spectral cubes, pixel datasets and the dataset container file."""
import hashlib
import logging
import os
from dataclasses import dataclass, field, replace

import numpy as np

from ..engine.serialize import FormatError, atomic_write, pack, unpack
from .fits import read_fits
from .scaling import ScalingParams, degenerate_mask, scale_profiles, unscale

log = logging.getLogger(__name__)

N_WAVELENGTHS = 112
STOKES = "IQUV"
CONTINUUM = (0, 15)  # inclusive wavelength index window
DATASET_MAGIC = b"SAED"


class AssemblyError(ValueError):
    pass


@dataclass
class SpectralCube:
    """Scan data indexed ``[y, x, wavelength, stokes]``.

    ``manifest[x]`` names the scan file that supplied column ``x``.
    """

    data: np.ndarray
    stokes: str = STOKES
    manifest: list = field(default_factory=list)
    timestamp: str = ""

    def __post_init__(self):
        if self.data.ndim != 4 or self.data.shape[2] != N_WAVELENGTHS or self.data.shape[3] != len(self.stokes):
            raise AssemblyError(
                f"cube must be (y, x, {N_WAVELENGTHS}, {len(self.stokes)}), got {self.data.shape}")

    @property
    def frame(self):
        return self.data.shape[:2]

    def plane(self, name):
        return self.data[..., self.stokes.index(name)]


def scan_to_planes(raw, name="scan"):
    """Reorder one slit scan to ``(y, wavelength, 4)``.

    Level-1 scans store ``NAXIS1`` = wavelength, ``NAXIS2`` = y and
    ``NAXIS3`` = Stokes, i.e. numpy shape ``(4, ny, 112)``.
    """
    if raw.ndim != 3 or raw.shape[0] != 4 or raw.shape[2] != N_WAVELENGTHS:
        raise AssemblyError(f"{name}: expected data shape (4, ny, {N_WAVELENGTHS}), got {raw.shape}")
    return raw.transpose(1, 2, 0)


def assemble_scans(paths, keep="IQUV"):
    """Concatenate slit scans along x in sorted filename order.

    ``keep`` selects which Stokes planes to retain (``"IV"`` halves memory).
    """
    paths = sorted(paths, key=lambda p: os.path.basename(os.fspath(p)))
    if not paths:
        raise AssemblyError("no scan files given")
    idx = [STOKES.index(s) for s in keep]
    columns = []
    manifest = []
    ny = None
    timestamp = ""
    for path in paths:
        hdu = read_fits(path)
        planes = scan_to_planes(hdu.data, os.path.basename(os.fspath(path)))
        if ny is None:
            ny = planes.shape[0]
            timestamp = str(hdu.header.get("DATE_OBS", hdu.header.get("DATE-OBS", "")))
        elif planes.shape[0] != ny:
            raise AssemblyError(f"{os.fspath(path)}: y extent {planes.shape[0]} differs from {ny}")
        columns.append(planes[..., idx].astype(np.float32))
        manifest.append(os.path.basename(os.fspath(path)))
    return SpectralCube(np.stack(columns, axis=1), keep, manifest, timestamp)


@dataclass
class PixelDataset:
    """Pixel spectra ``(n, 112, 2)`` (I, V) with spatial origins, scaling and split labels.

    ``profiles`` are in original units while ``scaling`` is ``None`` and in
    scaled units afterwards.
    """

    profiles: np.ndarray
    origins: np.ndarray
    frame: tuple
    scaling: ScalingParams | None = None
    labels: np.ndarray | None = None
    excluded: np.ndarray = field(default_factory=lambda: np.zeros((0, 2), dtype=np.int32))
    meta: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.profiles)

    @property
    def pixel_index(self):
        return self.origins[:, 0].astype(np.int64) * self.frame[1] + self.origins[:, 1]

    def subset(self, selector):
        """Rows selected by a boolean mask, index array or split label."""
        if isinstance(selector, str):
            if self.labels is None:
                raise ValueError("dataset has no split labels")
            selector = self.labels == selector
        return replace(
            self,
            profiles=self.profiles[selector],
            origins=self.origins[selector],
            scaling=None if self.scaling is None else self.scaling[selector],
            labels=None if self.labels is None else self.labels[selector],
        )

    def original(self):
        """Profiles in original units (float64)."""
        if self.scaling is None:
            return self.profiles.astype(np.float64)
        return unscale(self.profiles, self.scaling)

    def continuum(self):
        """Mean Stokes I over the continuum window, in original units."""
        lo, hi = CONTINUUM
        return self.original()[:, lo:hi + 1, 0].mean(axis=1)


def flatten_spatial(cube):
    """Row-major (y-major) pixel list of I and V; Q and U are dropped."""
    ny, nx = cube.frame
    iv = [cube.stokes.index("I"), cube.stokes.index("V")]
    profiles = cube.data.reshape(ny * nx, N_WAVELENGTHS, len(cube.stokes))[:, :, iv]
    yy, xx = np.divmod(np.arange(ny * nx, dtype=np.int64), nx)
    origins = np.stack([yy, xx], axis=1).astype(np.int32)
    return PixelDataset(np.ascontiguousarray(profiles, dtype=np.float32), origins, (ny, nx),
                        meta={"timestamp": cube.timestamp, "n_scans": len(cube.manifest)})


def unflatten(values, origins, frame, fill=np.nan):
    """Place per-pixel values back on the 2D frame."""
    values = np.asarray(values)
    image = np.full(tuple(frame) + values.shape[1:], fill, dtype=np.result_type(values.dtype, np.float64))
    image[origins[:, 0], origins[:, 1]] = values
    return image


def scale_dataset(ds, chunk=65536):
    """Scale every pixel; constant-I or all-zero-V pixels are dropped and listed in ``excluded``."""
    if ds.scaling is not None:
        raise ValueError("dataset is already scaled")
    bad = degenerate_mask(ds.profiles)
    if bad.any():
        log.warning("excluding %d degenerate profiles", int(bad.sum()))
    keep = ~bad
    good = ds.profiles[keep]
    scaled = np.empty(good.shape, dtype=np.float32)
    lo = np.empty(len(good))
    hi = np.empty(len(good))
    div = np.empty(len(good))
    for start in range(0, len(good), chunk):
        sl = slice(start, start + chunk)
        s, p = scale_profiles(good[sl])
        scaled[sl] = s
        lo[sl], hi[sl], div[sl] = p.i_min, p.i_max, p.v_div
    excluded = np.concatenate([ds.excluded, ds.origins[bad]]).astype(np.int32)
    return replace(ds, profiles=scaled, origins=ds.origins[keep], scaling=ScalingParams(lo, hi, div),
                   labels=None if ds.labels is None else ds.labels[keep], excluded=excluded)


class QuietSunError(ValueError):
    pass


def quiet_sun_continuum(ds, rectangles):
    """Quiet-Sun continuum intensity: mean over the selected pixels of their mean continuum I.

    ``rectangles`` are half-open ``{y0, y1, x0, x1}`` boxes; selected pixels
    must belong to the test split when the dataset is labelled.
    """
    from .splits import Rect

    mask = np.zeros(len(ds), dtype=bool)
    for r in rectangles:
        mask |= Rect.coerce(r).contains(ds.origins)
    if not mask.any():
        raise QuietSunError("quiet-Sun rectangles select no pixels")
    if ds.labels is not None and np.any(ds.labels[mask] != "test"):
        raise QuietSunError("quiet-Sun rectangles must lie inside the test split")
    ic = float(ds.subset(mask).continuum().mean())
    if not ic > 0:
        raise QuietSunError(f"quiet-Sun continuum must be positive, got {ic}")
    return ic


# -- container -----------------------------------------------------------------

def _arrays(ds):
    n = len(ds)
    scaling = ds.scaling
    labels = ds.labels
    vocab = [] if labels is None else sorted(set(labels.tolist()))
    codes = np.zeros(0, dtype="u1") if labels is None else np.searchsorted(vocab, labels).astype("u1")
    arrays = [
        ("profiles", np.ascontiguousarray(ds.profiles, dtype="<f4")),
        ("origins", np.ascontiguousarray(ds.origins, dtype="<i4")),
        ("i_min", np.zeros(0, "<f8") if scaling is None else np.asarray(scaling.i_min, dtype="<f8")),
        ("i_max", np.zeros(0, "<f8") if scaling is None else np.asarray(scaling.i_max, dtype="<f8")),
        ("v_div", np.zeros(0, "<f8") if scaling is None else np.asarray(scaling.v_div, dtype="<f8")),
        ("labels", codes),
        ("excluded", np.ascontiguousarray(ds.excluded, dtype="<i4")),
    ]
    if ds.profiles.shape[1:] != (N_WAVELENGTHS, 2) or ds.origins.shape != (n, 2):
        raise FormatError("dataset arrays have inconsistent shapes")
    return arrays, vocab


def dataset_to_bytes(ds):
    arrays, vocab = _arrays(ds)
    payload = b"".join(a.tobytes() for _, a in arrays)
    header = {
        "kind": "pixel-dataset",
        "frame": list(ds.frame),
        "n_pixels": len(ds),
        "n_wavelengths": N_WAVELENGTHS,
        "stokes": "IV",
        "scaled": ds.scaling is not None,
        "scale_range": [ds.scaling.a, ds.scaling.b] if ds.scaling is not None else None,
        "label_vocabulary": vocab,
        "arrays": [{"name": name, "dtype": a.dtype.str, "shape": list(a.shape)} for name, a in arrays],
        "payload_sha256": hashlib.sha256(payload).hexdigest(),
        "meta": ds.meta,
    }
    return pack(DATASET_MAGIC, header, payload)


def dataset_from_bytes(data):
    header, payload = unpack(DATASET_MAGIC, data)
    if hashlib.sha256(payload).hexdigest() != header["payload_sha256"]:
        raise FormatError("dataset payload checksum mismatch")
    sizes = [int(np.prod(e["shape"], dtype=np.int64)) * np.dtype(e["dtype"]).itemsize for e in header["arrays"]]
    if sum(sizes) != len(payload):
        raise FormatError(f"dataset payload holds {len(payload)} bytes, header declares {sum(sizes)}")
    arrays = {}
    offset = 0
    for entry in header["arrays"]:
        dt = np.dtype(entry["dtype"])
        count = int(np.prod(entry["shape"], dtype=np.int64))
        arrays[entry["name"]] = np.frombuffer(payload, dtype=dt, count=count, offset=offset).reshape(entry["shape"]).copy()
        offset += count * dt.itemsize
    scaling = None
    if header["scaled"]:
        a, b = header["scale_range"]
        scaling = ScalingParams(arrays["i_min"], arrays["i_max"], arrays["v_div"], a, b)
    labels = None
    if header["label_vocabulary"]:
        labels = np.asarray(header["label_vocabulary"])[arrays["labels"]]
    return PixelDataset(arrays["profiles"], arrays["origins"], tuple(header["frame"]), scaling, labels,
                        arrays["excluded"], header["meta"])


def save_dataset(path, ds):
    data = dataset_to_bytes(ds)
    atomic_write(path, data)
    return data


def load_dataset(path):
    with open(path, "rb") as fh:
        return dataset_from_bytes(fh.read())


def dataset_hash(ds_or_bytes):
    """SHA-256 of the serialised arrays, independent of ``meta``."""
    data = ds_or_bytes if isinstance(ds_or_bytes, (bytes, bytearray)) else dataset_to_bytes(ds_or_bytes)
    header, _ = unpack(DATASET_MAGIC, data)
    return header["payload_sha256"]
