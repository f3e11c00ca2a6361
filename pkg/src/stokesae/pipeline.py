"""Run configuration, seed derivation and the ingest/train/evaluate/sweep steps shared by the CLI."""
import copy
import glob
import hashlib
import json
import logging
import os
import zlib

import numpy as np

from . import metrics
from .dataio import (
    PixelDataset,
    assemble_scans,
    dataset_hash,
    flatten_spatial,
    load_plan,
    quiet_sun_continuum,
    scale_dataset,
    split_dataset,
    unscale,
)
from .dataio.splits import Rect, SplitPlan
from .engine import ConfigError
from .models import BOTTLENECK_SWEEP, DEFAULT_BOTTLENECK, Autoencoder
from .training import TrainConfig, fit

log = logging.getLogger(__name__)

DEFAULT_CONFIG = {
    "seed": 0,
    "model": {"kind": "CAE", "bottleneck": DEFAULT_BOTTLENECK},
    "train": TrainConfig().to_dict(),
    "split_plan": None,
    "version": "A",
    "quiet_sun": None,
    "metrics": {"chi2_mode": "full", "aggregate": "mean", "dob_bins": 100},
    "sweep": {"kinds": ["CAE", "DAE"], "bottlenecks": list(BOTTLENECK_SWEEP), "versions": ["A", "B", "C", "D", "E"],
              "version_bottleneck": DEFAULT_BOTTLENECK},
    "synth": {"ny": 100, "nx": 200, "jitter": 1.0},
}


def merge(base, override):
    """Recursive dict merge; ``override`` wins and ``None`` values in it are ignored."""
    out = copy.deepcopy(base)
    for key, value in (override or {}).items():
        if value is None:
            continue
        if isinstance(value, dict) and isinstance(out.get(key), dict):
            out[key] = merge(out[key], value)
        else:
            out[key] = copy.deepcopy(value)
    return out


def load_config(path=None, overrides=None):
    """Defaults, then the JSON config file, then command-line overrides."""
    cfg = DEFAULT_CONFIG
    if path is not None:
        with open(path) as fh:
            try:
                user = json.load(fh)
            except json.JSONDecodeError as exc:
                raise ConfigError(f"{path}: invalid JSON ({exc})") from None
        unknown = set(user) - set(DEFAULT_CONFIG) - {"paths"}
        if unknown:
            raise ConfigError(f"{path}: unknown config keys {sorted(unknown)}")
        cfg = merge(cfg, user)
    cfg = merge(cfg, overrides)
    TrainConfig.from_dict(cfg["train"])
    return cfg


def config_hash(cfg):
    """SHA-256 (first 16 hex digits) of the canonical JSON config without file paths."""
    body = {k: v for k, v in cfg.items() if k != "paths"}
    return hashlib.sha256(json.dumps(body, sort_keys=True, separators=(",", ":")).encode()).hexdigest()[:16]


def derive_seed(root, *names):
    """Child seed for a named purpose, e.g. ``derive_seed(0, "init", "CAE", 28)``.

    Names are mapped through CRC-32 and mixed with the root by
    ``numpy.random.SeedSequence``.
    """
    words = [int(root)] + [zlib.crc32(str(n).encode()) for n in names]
    return int(np.random.SeedSequence(words).generate_state(1)[0])


# -- data ------------------------------------------------------------------------

def ingest(scans_dir, keep="IV"):
    paths = sorted(glob.glob(os.path.join(scans_dir, "*.fits")) + glob.glob(os.path.join(scans_dir, "*.fit")))
    if not paths:
        raise ConfigError(f"no .fits files in {scans_dir}")
    cube = assemble_scans(paths, keep=keep)
    ds = flatten_spatial(cube)
    ds.meta["manifest"] = cube.manifest
    return scale_dataset(ds)


def resolve_plan(cfg, frame):
    """The configured plan (path or inline dict), else the bundled plan stretched to ``frame``."""
    plan = cfg.get("split_plan")
    if isinstance(plan, dict):
        return SplitPlan.from_dict(plan)
    if isinstance(plan, str):
        return load_plan(plan)
    bundled = load_plan()
    return bundled if tuple(frame) == bundled.frame else bundled.rescaled(frame)


def default_quiet_sun(plan):
    """A box at the left edge of the first test rectangle (10% of its width)."""
    if not plan.test:
        raise ConfigError("plan has no test split to place quiet-Sun regions in")
    r = plan.test[0]
    return [Rect(r.y0, r.y1, r.x0, r.x0 + max(1, (r.x1 - r.x0) // 10)).to_dict()]


def quiet_sun_rects(cfg, ds):
    rects = cfg.get("quiet_sun") or ds.meta.get("quiet_sun")
    if not rects:
        plan = ds.meta.get("split_plan")
        if plan is None:
            raise ConfigError("no quiet-Sun regions configured and the dataset carries no split plan")
        rects = default_quiet_sun(SplitPlan.from_dict(plan))
    return [Rect.coerce(r) for r in rects]


def relabel(ds, cfg, version):
    """Label ``ds`` for one training-set version using the plan stored in it or configured."""
    plan = SplitPlan.from_dict(ds.meta["split_plan"]) if "split_plan" in ds.meta else resolve_plan(cfg, ds.frame)
    labelled, report = split_dataset(ds, plan, version)
    labelled.meta = dict(ds.meta, split_plan=plan.to_dict(), version=version, split_report=report)
    return labelled, report


def require(ds, label):
    part = ds.subset(label)
    if len(part) == 0:
        raise ConfigError(f"dataset has no '{label}' pixels")
    return part


# -- training --------------------------------------------------------------------

def train(ds, cfg, kind, bottleneck, version, log_path=None, checkpoint_path=None):
    """Train one model on ``train-<version>``, validating on ``validation``."""
    seed = cfg["seed"]
    train_cfg = TrainConfig.from_dict(dict(cfg["train"], seed=derive_seed(seed, "shuffle", kind, bottleneck, version)))
    tr = require(ds, f"train-{version}")
    va = require(ds, "validation")
    model = Autoencoder.build(kind, int(bottleneck), seed=derive_seed(seed, "init", kind, bottleneck))
    meta = {"seed": seed, "config_hash": config_hash(cfg), "dataset_hash": dataset_hash(ds), "version": version}
    log.info("training %s-%d on %d profiles (version %s), validating on %d", kind, bottleneck, len(tr), version, len(va))
    state = fit(model, tr.profiles, va.profiles, train_cfg, log_path=log_path, checkpoint_path=checkpoint_path,
                meta=meta)
    meta.update(best_epoch=state.best_epoch, best_val=state.best_val, epochs_run=state.epoch,
                lr_reductions=state.lr_reductions, dob=training_dob(tr, cfg))
    return model, meta


def training_dob(part, cfg):
    return metrics.degree_of_balance(part.continuum(), cfg["metrics"]["dob_bins"])


# -- evaluation ------------------------------------------------------------------

def evaluation_context(ds, cfg):
    """I_c, the normalised test observations and the noise estimate."""
    test = require(ds, "test")
    ic = quiet_sun_continuum(ds, quiet_sun_rects(cfg, ds))
    observed = metrics.normalize(test.original(), ic)
    return test, ic, observed, metrics.observational_noise(observed)


def reconstruct(model, part, batch_size=4096):
    """Scaled reconstructions of ``part`` in dataset order."""
    out = model.network.predict(model.to_input(part.profiles), batch_size=batch_size)
    return model.from_output(out)


def evaluate(ds, cfg, reconstructions, name, info=None):
    """Metrics of scaled test-split ``reconstructions`` against the test observations."""
    test, ic, observed, noise = evaluation_context(ds, cfg)
    reconstructions = np.asarray(reconstructions)
    if reconstructions.shape != test.profiles.shape:
        raise ConfigError(f"reconstructions have shape {reconstructions.shape}, test split is {test.profiles.shape}")
    recon = metrics.normalize(unscale(reconstructions, test.scaling), ic)
    m = cfg["metrics"]
    run = metrics.evaluate_pairs(name, observed, recon, noise, mode=m["chi2_mode"], aggregate=m["aggregate"],
                                 info=info)
    context = {"I_c": ic, "n_test": len(test), "dataset_hash": dataset_hash(ds), "seed": cfg["seed"],
               "config_hash": config_hash(cfg)}
    return run, noise, context, test.origins


def write_evaluation(directory, runs, noise, context, origins):
    report = metrics.build_report(runs, noise, meta=context)
    metrics.write_report(report, runs, directory, origins)
    return report


def sweep(ds, cfg, out_dir):
    """Bottleneck sweep per model kind (one version) plus the training-set version sweep."""
    sw = cfg["sweep"]
    jobs = []
    for kind in sw["kinds"]:
        for b in sw["bottlenecks"]:
            jobs.append((kind, int(b), cfg["version"]))
        for v in sw["versions"]:
            job = (kind, int(sw["version_bottleneck"]), v)
            if job not in jobs:
                jobs.append(job)
    os.makedirs(out_dir, exist_ok=True)
    runs = []
    noise = context = origins = None
    for kind, b, version in jobs:
        labelled, _ = relabel(ds, cfg, version)
        name = f"{kind}-{b}-{version}"
        run_dir = os.path.join(out_dir, name)
        os.makedirs(run_dir, exist_ok=True)
        model, meta = train(labelled, cfg, kind, b, version, log_path=os.path.join(run_dir, "train_log.csv"))
        model.save(os.path.join(run_dir, "weights.saew"), **meta)
        test = require(labelled, "test")
        run, noise, context, origins = evaluate(labelled, cfg, reconstruct(model, test), name,
                                                info={"kind": kind, "bottleneck": b, "version": version,
                                                      "dob": meta["dob"]})
        write_evaluation(run_dir, [run], noise, context, origins)
        runs.append(run)
    context = dict(context, jobs=[list(j) for j in jobs])
    return write_evaluation(out_dir, runs, noise, context, origins), runs


def save_npy(path, array, meta):
    """``.npy`` array plus a ``.json`` sidecar with provenance."""
    np.save(path, array)
    with open(sidecar(path), "w") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True)
        fh.write("\n")


def sidecar(path):
    base = path[:-4] if path.endswith(".npy") else path
    return base + ".json"


def dataset_summary(ds: PixelDataset):
    out = {"frame": list(ds.frame), "n_pixels": len(ds), "scaled": ds.scaling is not None,
           "excluded": int(len(ds.excluded)), "hash": dataset_hash(ds)}
    if ds.labels is not None:
        names, counts = np.unique(ds.labels, return_counts=True)
        out["labels"] = {str(n): int(c) for n, c in zip(names, counts)}
    for key in ("seed", "config_hash", "version", "synthetic"):
        if key in ds.meta:
            out[key] = ds.meta[key]
    return out
