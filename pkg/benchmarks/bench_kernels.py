"""Compare the numba and numpy backends of the hot kernels.

Usage::

    python3 benchmarks/bench_kernels.py [--size N] [--repeat R]

Micro-benchmarks call both backends in one process.  The end-to-end timing
runs a smoothed-kernel evaluation in a subprocess with and without
``QCI_DISABLE_NUMBA=1``.
"""

from __future__ import annotations

import argparse
import os
import subprocess
import sys
import timeit

import numpy as np

from qcilab import _accel

END_TO_END = """
import time, numpy as np
from qcilab import kernels
from qcilab.cutoffs import identity_cutoff
from qcilab.mollifiers import make_mollifier
from qcilab.spectrum import torus_box_spectrum
spec = torus_box_spectrum(2, (150, 150))
mol = make_mollifier(0.75)
kernels.smoothed_measure_kernel(spec, np.array([30.0, 40.0]), mol, identity_cutoff(), [0.3, 1.1], [0.3, 1.1])
t = time.perf_counter()
for R in range(10, 60):
    kernels.smoothed_measure_kernel(spec, R * np.array([0.6, 0.8]), mol, identity_cutoff(),
                                    [0.3, 1.1], [0.3, 1.1])
print(time.perf_counter() - t)
"""


def _best(fn, repeat):
    fn()  # warm up (and compile)
    return min(timeit.repeat(fn, number=1, repeat=repeat))


def micro(size: int, repeat: int) -> list[tuple[str, float, float]]:
    ref, fast = _accel.reference_backend(), _accel.compiled_backend()
    if fast is None:
        raise SystemExit("numba is not available; nothing to compare")
    rng = np.random.default_rng(0)
    v = rng.normal(size=size)
    x = np.linspace(0, 10, 2001)
    f, df = np.exp(-x), -np.exp(-x)
    s = rng.uniform(-10, 10, size)
    rows = []
    for name, args in (("compensated_sum", (v,)), ("hermite_eval", (f, df, 0.005, s, 1))):
        t_np = _best(lambda: ref[name](*args), repeat)
        t_nb = _best(lambda: fast[name](*args), repeat)
        rows.append((name, t_np, t_nb))
    return rows


def end_to_end() -> tuple[float, float]:
    out = []
    for disable in (True, False):
        env = dict(os.environ)
        env.pop("QCI_DISABLE_NUMBA", None)
        if disable:
            env["QCI_DISABLE_NUMBA"] = "1"
        res = subprocess.run([sys.executable, "-c", END_TO_END], env=env, capture_output=True,
                             text=True, check=True)
        out.append(float(res.stdout.strip().splitlines()[-1]))
    return out[0], out[1]


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--size", type=int, default=1_000_000)
    p.add_argument("--repeat", type=int, default=5)
    args = p.parse_args(argv)
    print(f"{'kernel':<18}{'numpy [ms]':>12}{'numba [ms]':>12}{'speedup':>10}")
    for name, t_np, t_nb in micro(args.size, args.repeat):
        print(f"{name:<18}{1e3 * t_np:>12.2f}{1e3 * t_nb:>12.2f}{t_np / t_nb:>10.1f}")
    t_np, t_nb = end_to_end()
    print(f"{'smoothed sweep':<18}{1e3 * t_np:>12.1f}{1e3 * t_nb:>12.1f}{t_np / t_nb:>10.1f}")


if __name__ == "__main__":
    main()
