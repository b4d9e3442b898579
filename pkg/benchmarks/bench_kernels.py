"""Compare the compiled and numpy kernel backends, then time a training step and inference with each.

Usage: python3 benchmarks/bench_kernels.py [--repeat 20]
"""
import argparse
import os
import subprocess
import sys
import timeit

import numpy as np

from tlfno import kernels


def _best(fn, repeat):
    return min(timeit.repeat(fn, number=1, repeat=repeat))


def kernel_table(repeat):
    rng = np.random.default_rng(0)
    B, C, K = 8, 16, 12 * 32
    V = rng.normal(size=(B, C, K)) + 1j * rng.normal(size=(B, C, K))
    R = rng.normal(size=(C, C, K)) + 1j * rng.normal(size=(C, C, K))
    GY = rng.normal(size=(B, C, K)) + 1j * rng.normal(size=(B, C, K))
    x = rng.normal(size=1_000_000)
    cases = {
        "gelu (1M)": lambda b: b.gelu(x),
        "gelu_fwd (1M)": lambda b: b.gelu_fwd(x),
        f"spectral_mix ({B}x{C}x{K})": lambda b: b.spectral_mix(V, R),
        "spectral_mix_adjoint": lambda b: b.spectral_mix_adjoint(GY, V, R),
    }
    backends = [kernels.python_backend] + ([kernels.compiled_backend] if kernels.compiled_backend else [])
    print(f"{'kernel':32s}" + "".join(f"{b.BACKEND:>12s}" for b in backends) + "   speedup")
    for name, fn in cases.items():
        times = [_best(lambda: fn(b), repeat) for b in backends]
        speed = f"{times[0] / times[1]:8.2f}x" if len(times) == 2 else ""
        print(f"{name:32s}" + "".join(f"{t * 1e3:10.2f}ms" for t in times) + "  " + speed)


STEP = """
import time, numpy as np
from tlfno import kernels
from tlfno.fno import Hyperparams, init_params
from tlfno.optim import batch_loss
rng = np.random.default_rng(0)
p = init_params(Hyperparams(4, 8, 12, 16))
x = rng.normal(size=(8, 4, 64, 128)); y = rng.normal(size=(8, 64, 128))
batch_loss(p, x, y, 1)
best = min((lambda t0: (batch_loss(p, x, y, 1), time.perf_counter() - t0)[1])(time.perf_counter()) for _ in range(5))
print(kernels.BACKEND, best)
"""

INFER = """
import time, numpy as np
from tlfno import kernels
from tlfno.encodings import StandardStats
from tlfno.fno import Hyperparams, init_params, predict
rng = np.random.default_rng(0)
p = init_params(Hyperparams(4, 8, 12, 16))
p.stats = StandardStats((0.0,) * 4, (1.0,) * 4, 0.0, 1.0)
x = rng.normal(size=(36, 4, 150, 200))
predict(p, x[:12], batch_size=12)
best = min((lambda t0: (predict(p, x, batch_size=12), time.perf_counter() - t0)[1])(time.perf_counter()) for _ in range(3))
print(kernels.BACKEND, best)
"""


def _subprocess_table(title, script):
    print(title)
    for env in ({}, {"TLFNO_PURE_PYTHON": "1"}):
        out = subprocess.run([sys.executable, "-c", script], env={**os.environ, **env},
                             capture_output=True, text=True, check=True).stdout.split()
        print(f"  {out[0]:10s} {float(out[1]) * 1e3:8.1f} ms")


def step_table():
    _subprocess_table("\ntraining step (batch 8, 64x128, width 8, 4 layers), best of 5:", STEP)
    _subprocess_table("\ninference (36 fields, 150x200, batches of 12), best of 3:", INFER)


if __name__ == "__main__":
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeat", type=int, default=20)
    a = ap.parse_args()
    kernel_table(a.repeat)
    step_table()
