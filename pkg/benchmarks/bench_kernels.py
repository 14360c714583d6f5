"""Time the numba kernels against the numpy fallback, plus one LASER training step.

    python3 benchmarks/bench_kernels.py [--repeat 200]
"""

from __future__ import annotations

import argparse
import os
import subprocess
import sys
import timeit

import numpy as np

from laser_vfl import kernels

SHAPES = {"matmul": (64, 32, 16), "softmax_xent": (64, 4)}


def bench_kernels(repeat: int) -> None:
    if kernels.numba_impl is None:
        print("numba not importable; only the numpy path exists")
        return
    rng = np.random.default_rng(0)
    B, n, m = SHAPES["matmul"]
    x, W, g = rng.standard_normal((B, n)), rng.standard_normal((n, m)), rng.standard_normal((B, m))
    logits = rng.standard_normal(SHAPES["softmax_xent"])
    labels = rng.integers(4, size=B)
    cases = {
        "matmul": lambda impl: impl.matmul(x, W),
        "matmul_tn": lambda impl: impl.matmul_tn(x, g),
        "matmul_nt": lambda impl: impl.matmul_nt(g, W),
        "relu": lambda impl: impl.relu(g),
        "softmax_xent": lambda impl: impl.softmax_xent(logits, labels),
    }
    print(f"{'kernel':<14}{'numpy us':>12}{'numba us':>12}{'speedup':>10}")
    for name, fn in cases.items():
        fn(kernels.numba_impl)  # compile outside the timed region
        t_np = min(timeit.repeat(lambda: fn(kernels.numpy_impl), number=repeat, repeat=3)) / repeat
        t_nb = min(timeit.repeat(lambda: fn(kernels.numba_impl), number=repeat, repeat=3)) / repeat
        print(f"{name:<14}{t_np * 1e6:>12.2f}{t_nb * 1e6:>12.2f}{t_np / t_nb:>10.2f}")


STEP = """
import time, numpy as np
from laser_vfl import kernels
from laser_vfl.data import synth_classification
from laser_vfl.model import Arch, init_params
from laser_vfl.training import laser_train_step
ds = synth_classification(64, seed=0)
params = init_params("laser", Arch(ds.widths, 4), 0)
batch = ds.batch(np.arange(64))
laser_train_step(0, ds, batch, (0, 1, 2, 3), params, 0.05, 0)
t = time.perf_counter()
for s in range({n}):
    params, _ = laser_train_step(s, ds, batch, (0, 1, 2, 3), params, 0.05, 0)
print(kernels.BACKEND, (time.perf_counter() - t) / {n})
"""


def bench_step(n: int) -> None:
    # the backend is fixed at import, so each one runs in its own interpreter
    print("\nfull LASER step, K=4, B=64:")
    for flag in ("0", "1"):
        env = dict(os.environ, LASER_VFL_NUMBA=flag)
        out = subprocess.run([sys.executable, "-c", STEP.format(n=n)], env=env, capture_output=True, text=True, check=True)
        backend, secs = out.stdout.split()
        print(f"  {backend:<6} {float(secs) * 1e3:8.2f} ms/step")


def main() -> None:
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeat", type=int, default=200)
    ap.add_argument("--steps", type=int, default=20)
    args = ap.parse_args()
    bench_kernels(args.repeat)
    bench_step(args.steps)


if __name__ == "__main__":
    main()
