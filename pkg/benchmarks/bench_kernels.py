"""Compare the numba and pure-numpy kernel paths.

    python3 benchmarks/bench_kernels.py [--repeat 5]

Each kernel is timed on the same inputs through both dispatch tables
(the numba table is warmed up first so compile time is excluded), followed
by one end-to-end placement + allocation run under each backend in a
fresh interpreter, since the backend is chosen at import time.
"""

import argparse
import os
import subprocess
import sys
import timeit

import numpy as np

from pinchopt import _kernels


def cases(rng):
    dev_x, dev_y = rng.uniform(0, 30, 64), rng.uniform(-5, 5, 64)
    ant_x = np.sort(rng.uniform(0, 30, 32))
    return {
        "coherent_sums 64x32": ("coherent_sums", (dev_x, dev_y, ant_x, 3.0, 0.0, 586.8, 821.6)),
        "inverse_distance_sums 64x32": ("inverse_distance_sums", (dev_x, dev_y, ant_x, 3.0, 2.0)),
        "lambertw_m1 x1000": ("lambertw_m1", (-rng.uniform(0, 1 / np.e, 1000), 1e-15, 100)),
        "maxmin_levels M=6": ("maxmin_levels", (10 ** rng.uniform(-2, 2, 6), 1e-10, 1e-9)),
        "isotonic_project n=64": ("isotonic_project", (rng.normal(size=64),)),
    }


END_TO_END = """
import time, numpy as np
from pinchopt.sim import SimConfig, sweep
cfg = SimConfig(trials=5, schemes=["a", "c"], seed=1)
sweep(cfg.replace(trials=1))
t0 = time.perf_counter(); sweep(cfg); print(time.perf_counter() - t0)
"""


def end_to_end(disable):
    env = dict(os.environ, PINCHOPT_DISABLE_NUMBA="1" if disable else "0")
    out = subprocess.run([sys.executable, "-c", END_TO_END], env=env, capture_output=True, text=True, check=True)
    return float(out.stdout.strip().splitlines()[-1])


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--skip-end-to-end", action="store_true")
    args = ap.parse_args()
    if _kernels.NUMBA_KERNELS is None:
        sys.exit("numba is not installed; nothing to compare")
    rng = np.random.default_rng(0)
    print(f"{'kernel':32s} {'numba [us]':>12s} {'numpy [us]':>12s} {'speedup':>8s}")
    for label, (name, inputs) in cases(rng).items():
        jit, ref = _kernels.NUMBA_KERNELS[name], _kernels.NUMPY_KERNELS[name]
        jit(*inputs)
        timings = []
        for fn in (jit, ref):
            timer = timeit.Timer(lambda: fn(*inputs))
            number, _ = timer.autorange()
            timings.append(min(timer.repeat(args.repeat, number)) / number * 1e6)
        print(f"{label:32s} {timings[0]:12.1f} {timings[1]:12.1f} {timings[1] / timings[0]:8.1f}x")
    if not args.skip_end_to_end:
        fast, slow = end_to_end(False), end_to_end(True)
        print(f"{'sweep, 5 trials, schemes a+c':32s} {fast * 1e6:12.0f} {slow * 1e6:12.0f} {slow / fast:8.1f}x")


if __name__ == "__main__":
    main()
