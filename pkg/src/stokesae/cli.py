"""Command-line entry point: ``stokesae <command> [options]``.

Configuration precedence: built-in defaults < ``--config`` JSON file <
command-line flags. Usage errors exit with status 2; validation and runtime
failures exit with status 1 and print one ``error: <Type>: <message>`` line
to stderr.
"""
import argparse
import json
import logging
import os
import sys

import numpy as np

from . import __version__, metrics, pipeline, synth
from .dataio import load_dataset, save_dataset, scale_dataset, split_dataset
from .models import KINDS, Autoencoder

log = logging.getLogger("stokesae")


class CommandError(ValueError):
    pass


def _csv_ints(text):
    try:
        return [int(v) for v in text.split(",") if v]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _csv_words(text):
    return [v.strip() for v in text.split(",") if v.strip()]


def _existing(path):
    if not os.path.exists(path):
        raise CommandError(f"path does not exist: {path}")
    return path


def _emit(obj):
    print(json.dumps(obj, indent=2, sort_keys=True, default=metrics._json_default))


def _config(args, **overrides):
    return pipeline.load_config(args.config, overrides)


def _train_overrides(args):
    return {"epochs": args.epochs, "batch_size": args.batch_size, "learning_rate": args.lr}


# -- commands --------------------------------------------------------------------

def cmd_ingest(args):
    cfg = _config(args, seed=args.seed)
    ds = pipeline.ingest(_existing(args.scans))
    ds.meta.update(seed=cfg["seed"], config_hash=pipeline.config_hash(cfg), source=os.path.abspath(args.scans))
    save_dataset(args.out, ds)
    _emit(pipeline.dataset_summary(ds))


def cmd_synth(args):
    cfg = _config(args, seed=args.seed, synth={"ny": args.ny, "nx": args.nx, "jitter": args.jitter})
    s = cfg["synth"]
    seed = pipeline.derive_seed(cfg["seed"], "synth")
    regions = synth.active_region(s["ny"], s["nx"])
    if args.fits_dir:
        cube = synth.make_frame(s["ny"], s["nx"], regions, seed=seed, jitter=s["jitter"])
        paths = synth.write_scans(cube, args.fits_dir)
        log.info("wrote %d scans to %s", len(paths), args.fits_dir)
        if not args.out:
            return
    if not args.out:
        raise CommandError("give --out and/or --fits-dir")
    ds, truth = synth.make_dataset(s["ny"], s["nx"], seed=seed, jitter=s["jitter"], regions=regions)
    ds = scale_dataset(ds)
    plan = pipeline.resolve_plan(cfg, ds.frame)
    ds, report = split_dataset(ds, plan, cfg["version"])
    ds.meta.update(seed=cfg["seed"], config_hash=pipeline.config_hash(cfg), split_plan=plan.to_dict(),
                   version=cfg["version"], quiet_sun=pipeline.default_quiet_sun(plan), synth=s)
    save_dataset(args.out, ds)
    if args.truth:
        pipeline.save_npy(args.truth, truth.astype(np.float32), {"seed": cfg["seed"], "dataset": args.out})
    _emit(pipeline.dataset_summary(ds))


def cmd_split(args):
    cfg = _config(args, version=args.version, split_plan=args.plan)
    ds = load_dataset(_existing(args.dataset))
    plan = pipeline.resolve_plan(cfg, ds.frame)
    labelled, report = split_dataset(ds, plan, cfg["version"])
    labelled.meta.update(split_plan=plan.to_dict(), version=cfg["version"], split_report=report)
    if cfg.get("quiet_sun"):
        labelled.meta["quiet_sun"] = cfg["quiet_sun"]
    save_dataset(args.out, labelled)
    _emit(report)


def cmd_train(args):
    cfg = _config(args, seed=args.seed, version=args.version, train=_train_overrides(args),
                  model={"kind": args.kind, "bottleneck": args.bottleneck})
    ds = load_dataset(_existing(args.dataset))
    version = cfg["version"]
    if ds.labels is None or f"train-{version}" not in set(ds.labels.tolist()):
        ds, _ = pipeline.relabel(ds, cfg, version)
    kind, b = cfg["model"]["kind"].upper(), int(cfg["model"]["bottleneck"])
    model, meta = pipeline.train(ds, cfg, kind, b, version, log_path=args.log)
    model.save(args.out, **meta)
    _emit(meta)


def _model(path):
    model, meta = Autoencoder.load(_existing(path))
    return model, meta


def cmd_encode(args):
    model, meta = _model(args.weights)
    ds = load_dataset(_existing(args.dataset))
    part = ds.subset(args.split) if args.split != "all" else ds
    if len(part) == 0:
        raise CommandError(f"dataset has no '{args.split}' pixels")
    z = model.encode(part.profiles)
    pipeline.save_npy(args.out, z, {"weights": args.weights, "dataset": args.dataset, "split": args.split,
                                    "seed": meta.get("seed"), "config_hash": meta.get("config_hash"),
                                    "dataset_hash": pipeline.dataset_hash(ds)})


def cmd_decode(args):
    model, meta = _model(args.weights)
    z = np.load(_existing(args.latents))
    recon = model.decode(z)
    provenance = {"weights": args.weights, "latents": args.latents, "seed": meta.get("seed"),
                  "config_hash": meta.get("config_hash")}
    if os.path.exists(pipeline.sidecar(args.latents)):
        with open(pipeline.sidecar(args.latents)) as fh:
            provenance["dataset_hash"] = json.load(fh).get("dataset_hash")
    pipeline.save_npy(args.out, recon, provenance)


def cmd_evaluate(args):
    cfg = _config(args, metrics={"chi2_mode": args.chi2_mode, "aggregate": args.aggregate})
    ds = load_dataset(_existing(args.dataset))
    if (args.weights is None) == (args.reconstructions is None):
        raise CommandError("give exactly one of --weights and --reconstructions")
    if args.weights:
        model, meta = _model(args.weights)
        recon = pipeline.reconstruct(model, pipeline.require(ds, "test"))
        info = {"kind": model.kind, "bottleneck": model.bottleneck, "version": meta.get("version", ""),
                "dob": meta.get("dob", "")}
        name = args.name or f"{model.kind}-{model.bottleneck}-{meta.get('version', '')}"
    else:
        recon = np.load(_existing(args.reconstructions))
        info = {}
        name = args.name or os.path.splitext(os.path.basename(args.reconstructions))[0]
    run, noise, context, origins = pipeline.evaluate(ds, cfg, recon, name, info)
    report = pipeline.write_evaluation(args.out, [run], noise, context, origins)
    _emit(report.rows)


def cmd_sweep(args):
    cfg = _config(args, seed=args.seed, version=args.version, train=_train_overrides(args),
                  sweep={"kinds": args.kinds, "bottlenecks": args.bottlenecks, "versions": args.versions,
                         "version_bottleneck": args.version_bottleneck})
    ds = load_dataset(_existing(args.dataset))
    report, _ = pipeline.sweep(ds, cfg, args.out)
    _emit(report.rows)


def cmd_report(args):
    rows, hist, hashes, noise = [], {}, set(), None
    for d in args.inputs:
        with open(os.path.join(_existing(d), "report.json")) as fh:
            rep = json.load(fh)
        hashes.add(rep["meta"].get("dataset_hash"))
        if len(hashes) > 1:
            raise CommandError(f"{d}: dataset hash differs from earlier reports; refusing to mix")
        rows.extend(rep["rows"])
        hist.update(rep["histograms"])
        noise = rep["noise"]
    report = metrics.EvalReport(rows, noise, hist, {"dataset_hash": hashes.pop(), "inputs": list(args.inputs)})
    os.makedirs(args.out, exist_ok=True)
    metrics.write_rows_csv(os.path.join(args.out, "runs.csv"), rows, metrics.RUN_COLUMNS)
    with open(os.path.join(args.out, "report.json"), "w") as fh:
        json.dump(report.to_dict(), fh, indent=2)
        fh.write("\n")
    _emit(rows)


def cmd_describe(args):
    if args.weights:
        model, meta = _model(args.weights)
        print(model.describe())
        _emit(meta)
    elif args.dataset:
        _emit(pipeline.dataset_summary(load_dataset(_existing(args.dataset))))
    elif args.plan:
        plan = pipeline.load_plan(None if args.plan == "bundled" else _existing(args.plan))
        _emit({"frame": list(plan.frame), "counts": plan.counts(), "expected": plan.expected})
    else:
        print(Autoencoder.build(args.kind, args.bottleneck).describe())


# -- parser ----------------------------------------------------------------------

def build_parser():
    p = argparse.ArgumentParser(prog="stokesae", description="Stokes I/V autoencoder compression toolkit.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("-v", "--verbose", action="count", default=0, help="more logging (repeatable)")
    p.add_argument("-q", "--quiet", action="store_true", help="warnings and errors only")
    sub = p.add_subparsers(dest="command", required=True, metavar="command")

    def command(name, func, help_text):
        sp = sub.add_parser(name, help=help_text, description=help_text)
        sp.add_argument("--config", help="JSON run configuration")
        sp.set_defaults(func=func)
        return sp

    def training_flags(sp):
        sp.add_argument("--seed", type=int, help="root seed")
        sp.add_argument("--epochs", type=int)
        sp.add_argument("--batch-size", type=int)
        sp.add_argument("--lr", type=float, help="initial learning rate")
        sp.add_argument("--version", dest="version", choices=list("ABCDE"), help="training-set version")

    sp = command("ingest", cmd_ingest, "assemble FITS scans into a scaled dataset container")
    sp.add_argument("--scans", required=True, help="directory of .fits scans (sorted by name along x)")
    sp.add_argument("--out", required=True)
    sp.add_argument("--seed", type=int)

    sp = command("synth", cmd_synth, "generate a synthetic frame (dataset container and/or FITS scans)")
    sp.add_argument("--out", help="dataset container to write (scaled and split)")
    sp.add_argument("--fits-dir", help="also write one FITS scan per column here")
    sp.add_argument("--truth", help="write the noiseless I/V profiles (.npy)")
    sp.add_argument("--ny", type=int)
    sp.add_argument("--nx", type=int)
    sp.add_argument("--jitter", type=float)
    sp.add_argument("--seed", type=int)

    sp = command("split", cmd_split, "label pixels train-<version>/validation/test from a split plan")
    sp.add_argument("--dataset", required=True)
    sp.add_argument("--plan", help="split plan JSON (default: bundled plan, stretched to the frame)")
    sp.add_argument("--version", choices=list("ABCDE"))
    sp.add_argument("--out", required=True)

    sp = command("train", cmd_train, "train one autoencoder")
    sp.add_argument("--dataset", required=True)
    sp.add_argument("--kind", type=str.upper, choices=KINDS)
    sp.add_argument("--bottleneck", type=int)
    training_flags(sp)
    sp.add_argument("--log", help="per-epoch CSV log")
    sp.add_argument("--out", required=True, help="weights file")

    sp = command("encode", cmd_encode, "encode profiles to latent vectors (.npy)")
    sp.add_argument("--weights", required=True)
    sp.add_argument("--dataset", required=True)
    sp.add_argument("--split", default="test", help="label to encode, or 'all'")
    sp.add_argument("--out", required=True)

    sp = command("decode", cmd_decode, "decode latent vectors to scaled profiles (.npy)")
    sp.add_argument("--weights", required=True)
    sp.add_argument("--latents", required=True)
    sp.add_argument("--out", required=True)

    sp = command("evaluate", cmd_evaluate, "metrics of a model or of reconstructions on the test split")
    sp.add_argument("--dataset", required=True)
    sp.add_argument("--weights")
    sp.add_argument("--reconstructions", help="scaled (n, 112, 2) .npy in test-split order")
    sp.add_argument("--name")
    sp.add_argument("--chi2-mode", choices=sorted(metrics.CHI2_MODES))
    sp.add_argument("--aggregate", choices=metrics.AGGREGATES)
    sp.add_argument("--out", required=True, help="report directory")

    sp = command("sweep", cmd_sweep, "bottleneck and training-set version experiment matrix")
    sp.add_argument("--dataset", required=True)
    sp.add_argument("--kinds", type=lambda t: [k.upper() for k in _csv_words(t)])
    sp.add_argument("--bottlenecks", type=_csv_ints)
    sp.add_argument("--versions", type=_csv_words)
    sp.add_argument("--version-bottleneck", type=int, help="bottleneck used for the training-set version runs")
    training_flags(sp)
    sp.add_argument("--out", required=True)

    sp = command("report", cmd_report, "merge evaluation reports of one dataset")
    sp.add_argument("inputs", nargs="+", help="report directories")
    sp.add_argument("--out", required=True)

    sp = command("describe", cmd_describe, "print a model layer table, dataset summary or plan counts")
    sp.add_argument("--kind", type=str.upper, choices=KINDS, default="CAE")
    sp.add_argument("--bottleneck", type=int, default=28)
    sp.add_argument("--weights")
    sp.add_argument("--dataset")
    sp.add_argument("--plan", help="plan JSON, or 'bundled'")
    return p


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    level = logging.WARNING if args.quiet else (logging.DEBUG if args.verbose > 1 else logging.INFO)
    logging.basicConfig(level=level, stream=sys.stderr,
                        format="%(asctime)s %(levelname)s %(name)s: %(message)s", force=True)
    try:
        args.func(args)
    except (ValueError, OSError, RuntimeError, FloatingPointError, KeyError) as exc:
        message = " ".join(str(exc).split()) or repr(exc)
        print(f"error: {type(exc).__name__}: {message}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
