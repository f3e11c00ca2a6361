"""Compare the compiled kernels with the numpy fallback.

Run ``python benchmarks/bench_kernels.py``. Each kernel is timed on
CAE-sized float32 activations in both backends, then one CAE-28 training
epoch slice is timed in a subprocess per backend (the backend is chosen at
import time through ``STOKESAE_BACKEND``).
"""
import argparse
import json
import os
import subprocess
import sys
import timeit

import numpy as np

from stokesae.engine import _kernels_py

try:
    from stokesae.engine import _kernels as _kernels_c
except ImportError:
    _kernels_c = None

STEP_SNIPPET = """
import json, time
import numpy as np
from stokesae.engine import BACKEND
from stokesae.models import Autoencoder
from stokesae.training import TrainConfig, TrainState, train_epoch
from stokesae.engine import Adam
x = np.random.default_rng(0).uniform(0, 1, ({n}, 112, 2)).astype(np.float32)
model = Autoencoder.build("CAE", 28, seed=0)
cfg = TrainConfig(epochs=1, batch_size={batch})
state = TrainState(lr=1e-3)
train_epoch(model, x[:{batch}], cfg, state, Adam())
t = time.perf_counter()
train_epoch(model, x, cfg, state, Adam())
print(json.dumps({{"backend": BACKEND, "seconds": time.perf_counter() - t}}))
"""


def cases(batch):
    rng = np.random.default_rng(0)
    x = rng.standard_normal((batch, 112, 64)).astype(np.float32)
    cols = rng.standard_normal((batch, 112, 7 * 64)).astype(np.float32)
    pooled = rng.standard_normal((batch, 56, 64)).astype(np.float32)
    flat = x.reshape(batch, -1)
    return {
        "im2col K=7 C=64": (lambda k: k.im2col1d(x, 7)),
        "col2im K=7 C=64": (lambda k: k.col2im1d(cols, 7, 64)),
        "maxpool forward": (lambda k: k.maxpool1d_forward(x, 2)),
        "maxpool backward": (lambda k, a=_kernels_py.maxpool1d_forward(x, 2)[1]: k.maxpool1d_backward(pooled, a, 2)),
        "elu forward": (lambda k: k.elu_forward(flat, 1.0)),
        "elu backward": (lambda k: k.elu_backward(flat, flat, 1.0)),
    }


def best_of(fn, repeat):
    return min(timeit.repeat(fn, number=1, repeat=repeat))


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--batch", type=int, default=512)
    p.add_argument("--repeat", type=int, default=7)
    p.add_argument("--epoch-profiles", type=int, default=2048, help="profiles in the timed training slice")
    p.add_argument("--json", help="also write results here")
    args = p.parse_args(argv)

    results = {"kernels": {}, "epoch": {}}
    print(f"{'kernel':<20}{'numpy ms':>10}{'cython ms':>11}{'speedup':>9}")
    for name, fn in cases(args.batch).items():
        t_py = best_of(lambda: fn(_kernels_py), args.repeat) * 1e3
        t_c = best_of(lambda: fn(_kernels_c), args.repeat) * 1e3 if _kernels_c else float("nan")
        results["kernels"][name] = {"python_ms": t_py, "cython_ms": t_c}
        print(f"{name:<20}{t_py:>10.2f}{t_c:>11.2f}{t_py / t_c:>8.1f}x")

    snippet = STEP_SNIPPET.format(n=args.epoch_profiles, batch=min(args.batch, 128))
    for backend in ("python", "cython"):
        if backend == "cython" and _kernels_c is None:
            continue
        env = dict(os.environ, STOKESAE_BACKEND=backend)
        out = subprocess.run([sys.executable, "-c", snippet], env=env, capture_output=True, text=True, check=True)
        results["epoch"][backend] = json.loads(out.stdout)["seconds"]
    print(f"\nCAE-28 training pass over {args.epoch_profiles} profiles:")
    for backend, sec in results["epoch"].items():
        print(f"  {backend:<8}{sec:8.2f} s")
    if args.json:
        with open(args.json, "w") as fh:
            json.dump(results, fh, indent=2)
    return 0


if __name__ == "__main__":
    sys.exit(main())
