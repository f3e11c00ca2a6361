"""Reconstruction metrics: degree of balance, observational noise, chi-square and RMSD.

Profile arrays are ``(n, 112, 2)`` with Stokes I in channel 0 and V in
channel 1, normalised by the quiet-Sun continuum ``I_c``. Every wavelength
index range is inclusive at both ends.
"""
import csv
import json
import math
import os
from dataclasses import dataclass, field

import numpy as np

CONTINUUM = (0, 15)
LEFT_CORE = (10, 45)
RIGHT_CORE = (60, 95)
FULL = (0, 111)
STOKES = ("I", "V")
REGIONS = ("LLC_I", "RLC_I", "LLC_V", "RLC_V")
CHI2_MODES = {"full": FULL, "continuum": CONTINUUM}
AGGREGATES = ("mean", "pooled")


class MetricError(ValueError):
    pass


def _window(lo, hi, size=112):
    if not 0 <= lo <= hi < size:
        raise MetricError(f"empty or out-of-range wavelength window [{lo}, {hi}]")
    return slice(lo, hi + 1)


# -- balance -------------------------------------------------------------------

def dob_from_counts(counts):
    """Shannon entropy of bin counts divided by ``log k`` (natural logs, ``0 log 0 = 0``)."""
    c = np.asarray(counts, dtype=np.float64)
    k = c.size
    if k < 2:
        raise MetricError(f"need at least 2 bins, got {k}")
    n = c.sum()
    if n <= 0:
        raise MetricError("degree of balance needs at least one pixel")
    p = c[c > 0] / n
    return float(-(p * np.log(p)).sum() / math.log(k))


def histogram_counts(values, bins=100):
    """Equal-width bins over ``[min, max]``; the last bin includes the maximum."""
    values = np.asarray(values, dtype=np.float64).ravel()
    if bins < 2:
        raise MetricError(f"need at least 2 bins, got {bins}")
    if values.size == 0:
        raise MetricError("no values to bin")
    lo, hi = values.min(), values.max()
    if hi == lo:
        counts = np.zeros(bins, dtype=np.int64)
        counts[0] = values.size
        return counts, np.linspace(lo, lo + 1.0, bins + 1)
    return np.histogram(values, bins=bins, range=(lo, hi))


def degree_of_balance(values, bins=100):
    """Degree of balance of per-pixel continuum values: 0 for one bin, 1 for a flat histogram."""
    counts, _ = histogram_counts(values, bins)
    return dob_from_counts(counts)


# -- noise ---------------------------------------------------------------------

@dataclass
class NoiseEstimate:
    sigma_i: float
    sigma_v: float
    n: int
    per_spectrum_i: np.ndarray = field(repr=False, default=None)
    per_spectrum_v: np.ndarray = field(repr=False, default=None)

    def __getitem__(self, stokes):
        return {"I": self.sigma_i, "V": self.sigma_v}[stokes]

    def to_dict(self):
        return {"sigma_obs_I": self.sigma_i, "sigma_obs_V": self.sigma_v, "n_spectra": self.n}


def observational_noise(profiles, window=CONTINUUM, ddof=1):
    """Mean over spectra of the continuum scatter.

    I: standard deviation about each spectrum's own continuum mean (``ddof=1``
    by default; the 16-point window makes the ``ddof=0`` estimate about 5%
    low). V: root mean square about zero.
    """
    p = np.asarray(profiles, dtype=np.float64)
    if p.ndim != 3 or p.shape[0] == 0:
        raise MetricError("observational noise needs a non-empty (n, 112, 2) array")
    w = p[:, _window(*window, p.shape[1])]
    per_i = w[..., 0].std(axis=1, ddof=ddof)
    per_v = np.sqrt(np.mean(w[..., 1] ** 2, axis=1))
    return NoiseEstimate(float(per_i.mean()), float(per_v.mean()), len(p), per_i, per_v)


# -- per-profile errors --------------------------------------------------------

def _pair(observed, reconstructed):
    s = np.asarray(observed, dtype=np.float64)
    r = np.asarray(reconstructed, dtype=np.float64)
    if s.shape != r.shape:
        raise MetricError(f"observed {s.shape} and reconstructed {r.shape} differ in shape")
    return s, r


def rmsd(observed, reconstructed, window=None):
    """Root-mean-square deviation along the last axis, optionally over an inclusive index window."""
    s, r = _pair(observed, reconstructed)
    d = r - s
    if window is not None:
        d = d[..., _window(*window, s.shape[-1])]
    return np.sqrt(np.mean(d ** 2, axis=-1))


def chi_square(observed, reconstructed, sigma, mode="full"):
    """``(1/d) sum((S' - S)^2) / sigma^2`` along the last axis.

    ``mode="full"`` uses all 112 points, ``"continuum"`` indices 0-15.
    """
    if mode not in CHI2_MODES:
        raise MetricError(f"unknown chi-square mode {mode!r}; choose from {sorted(CHI2_MODES)}")
    if not sigma > 0:
        raise MetricError(f"sigma must be positive, got {sigma}")
    s, r = _pair(observed, reconstructed)
    d = (r - s)[..., _window(*CHI2_MODES[mode], s.shape[-1])]
    return np.mean((d / sigma) ** 2, axis=-1)


def line_core_rmsd(observed, reconstructed, aggregate="mean"):
    """RMSD in the left (10-45) and right (60-95) line cores for I and V.

    ``aggregate="mean"`` averages per-profile RMSDs; ``"pooled"`` takes one
    RMSD over all residuals of the region.
    """
    if aggregate not in AGGREGATES:
        raise MetricError(f"unknown aggregate {aggregate!r}; choose from {AGGREGATES}")
    s, r = _pair(observed, reconstructed)
    if s.ndim != 3 or s.shape[2] != 2 or len(s) == 0:
        raise MetricError("line-core RMSD needs non-empty (n, 112, 2) arrays")
    out = {}
    for c, stokes in enumerate(STOKES):
        for side, window in (("LLC", LEFT_CORE), ("RLC", RIGHT_CORE)):
            if aggregate == "mean":
                out[f"{side}_{stokes}"] = float(rmsd(s[..., c], r[..., c], window).mean())
            else:
                d = (r[..., c] - s[..., c])[:, _window(*window)]
                out[f"{side}_{stokes}"] = float(np.sqrt(np.mean(d ** 2)))
    return {k: out[k] for k in REGIONS}


def normalize(profiles, ic):
    """Divide I and V by the quiet-Sun continuum intensity."""
    if not ic > 0:
        raise MetricError(f"I_c must be positive, got {ic}")
    return np.asarray(profiles, dtype=np.float64) / ic


# -- reports -------------------------------------------------------------------

PROFILE_COLUMNS = ("run", "index", "y", "x", "chi2_I", "chi2_V", "rmsd_I", "rmsd_V",
                   "LLC_I", "RLC_I", "LLC_V", "RLC_V")
RUN_COLUMNS = ("run", "kind", "bottleneck", "version", "n_profiles", "LLC_I", "RLC_I", "LLC_V", "RLC_V",
               "rmsd_I", "rmsd_V", "chi2_I", "chi2_V", "sigma_obs_I", "sigma_obs_V", "dob")


@dataclass
class RunEvaluation:
    """Per-profile metrics of one model run on one test set."""

    name: str
    per_profile: dict
    regions: dict
    info: dict = field(default_factory=dict)

    def row(self, noise):
        row = {"run": self.name, "kind": self.info.get("kind", ""), "bottleneck": self.info.get("bottleneck", ""),
               "version": self.info.get("version", ""), "n_profiles": len(self.per_profile["rmsd_I"])}
        row.update(self.regions)
        for key in ("rmsd_I", "rmsd_V", "chi2_I", "chi2_V"):
            m = float(np.mean(self.per_profile[key]))
            row[key] = m if math.isfinite(m) else None
        row["sigma_obs_I"] = noise.sigma_i
        row["sigma_obs_V"] = noise.sigma_v
        row["dob"] = self.info.get("dob", "")
        return row


def evaluate_pairs(name, observed, reconstructed, noise, mode="full", aggregate="mean", info=None):
    """Evaluate one run; ``observed`` and ``reconstructed`` are I_c-normalised ``(n, 112, 2)``."""
    s, r = _pair(observed, reconstructed)
    per = {}
    for c, stokes in enumerate(STOKES):
        sigma = noise[stokes]
        per[f"rmsd_{stokes}"] = rmsd(s[..., c], r[..., c])
        # a noiseless reference has sigma 0: chi-square is then undefined
        per[f"chi2_{stokes}"] = (chi_square(s[..., c], r[..., c], sigma, mode) if sigma > 0
                                 else np.full(len(s), np.nan))
        for side, window in (("LLC", LEFT_CORE), ("RLC", RIGHT_CORE)):
            per[f"{side}_{stokes}"] = rmsd(s[..., c], r[..., c], window)
    regions = line_core_rmsd(s, r, aggregate)
    return RunEvaluation(name, per, regions, dict(info or {}, chi2_mode=mode, aggregate=aggregate))


def histogram_summary(values, bins=50):
    values = np.asarray(values, dtype=np.float64)
    values = values[np.isfinite(values)]
    if values.size == 0:
        return {"mean": None, "edges": [], "counts": []}
    counts, edges = np.histogram(values, bins=bins)
    return {"mean": float(values.mean()), "edges": edges.tolist(), "counts": counts.tolist()}


@dataclass
class EvalReport:
    rows: list
    noise: dict
    histograms: dict = field(default_factory=dict)
    meta: dict = field(default_factory=dict)

    def to_dict(self):
        return {"rows": self.rows, "noise": self.noise, "histograms": self.histograms, "meta": self.meta}


def build_report(runs, noise, meta=None, bins=50):
    """One row per run with region RMSDs, mean chi-square/RMSD and the noise reference."""
    rows = [run.row(noise) for run in runs]
    hist = {}
    for run in runs:
        hist[run.name] = {k: histogram_summary(run.per_profile[k], bins)
                          for k in ("chi2_I", "chi2_V", "rmsd_I", "rmsd_V")}
    return EvalReport(rows, noise.to_dict(), hist, dict(meta or {}))


def _csv_value(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return v


def write_rows_csv(path, rows, columns):
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=list(columns), extrasaction="ignore")
        w.writeheader()
        for row in rows:
            w.writerow({k: _csv_value(row.get(k, "")) for k in columns})


def read_rows_csv(path):
    """Read a CSV written by :func:`write_rows_csv`; numeric fields come back as floats or ints."""
    def parse(v):
        for cast in (int, float):
            try:
                return cast(v)
            except ValueError:
                pass
        return v

    with open(path, newline="") as fh:
        return [{k: parse(v) for k, v in row.items()} for row in csv.DictReader(fh)]


def profile_rows(run, origins=None):
    n = len(run.per_profile["rmsd_I"])
    for i in range(n):
        row = {"run": run.name, "index": i}
        if origins is not None:
            row["y"], row["x"] = int(origins[i, 0]), int(origins[i, 1])
        for k in PROFILE_COLUMNS[4:]:
            v = float(run.per_profile[k][i])
            row[k] = v if math.isfinite(v) else None
        yield row


def write_report(report, runs, directory, origins=None):
    """Write ``runs.csv``, ``profiles.csv`` and ``report.json`` under ``directory``."""
    os.makedirs(directory, exist_ok=True)
    write_rows_csv(os.path.join(directory, "runs.csv"), report.rows, RUN_COLUMNS)
    rows = [r for run in runs for r in profile_rows(run, origins)]
    write_rows_csv(os.path.join(directory, "profiles.csv"), rows, PROFILE_COLUMNS)
    with open(os.path.join(directory, "report.json"), "w") as fh:
        json.dump(report.to_dict(), fh, indent=2, default=_json_default)
        fh.write("\n")


def _json_default(obj):
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(f"cannot serialise {type(obj).__name__}")
