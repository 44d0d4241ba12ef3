"""Benchmark the compiled contrast kernels against the pure-numpy fallback.

Usage::

    python3 bench/benchmark_kernels.py [--n 8000] [--repeats 100]

Prints one row per (family, derivative order) with the per-call time of each
backend and the speedup, and finishes with an end-to-end fit comparison.
"""

import argparse
import time

import numpy as np

import pencrit as pc
import pencrit._kernels_py as kernels_py

try:
    import pencrit._ckernels as kernels_c
except ImportError:  # pragma: no cover
    kernels_c = None


def _cases(n):
    out = []
    spec = pc.FamilySpec(pc.FamilyKind.ARX, p=2, q=1)
    th = np.array([0.3, 0.4, -0.2, 0.1, 1.1])
    traj = pc.simulate_acx(spec, th, n, rng=pc.RngStream(3))
    out.append(("ARX(2,1)", "ARX", traj, th, 2, 1))
    spec = pc.FamilySpec(pc.FamilyKind.ARCH, p=2)
    th = np.array([0.5, 0.3, 0.2])
    traj = pc.simulate_acx(spec, th, n, rng=pc.RngStream(4))
    out.append(("ARCH(2)", "ARCH", traj, th, 2, 0))
    spec = pc.FamilySpec(pc.FamilyKind.INGARCH_P, p=2)
    th = np.array([1.0, 0.3, 0.2])
    traj = pc.simulate_mod(spec, th, n, rng=pc.RngStream(5))
    out.append(("INGARCH_P(2)", "INGARCH_P", traj, th, 2, 0))
    spec = pc.FamilySpec(pc.FamilyKind.INGARCH_11)
    th = np.array([1.0, 0.3, 0.4])
    traj = pc.simulate_mod(spec, th, n, rng=pc.RngStream(6))
    out.append(("INGARCH_11", "INGARCH_11", traj, th, 1, 0))
    spec = pc.FamilySpec(pc.FamilyKind.BIV_INGARCH)
    th = np.array([1.0, 0.5, 0.3, 0.1, 0.05, 0.4])
    traj = pc.simulate_mod(spec, th, n, rng=pc.RngStream(7))
    out.append(("BIV_INGARCH", "BIV_INGARCH", traj, th, 1, 0))
    return out


def _time_call(mod, kind, traj, th, p, q, order, repeats):
    args = (kind, traj.obs, traj.covariates, th, p, q, 1e-6, 1e-6, order, False)
    mod.contrast_terms(*args)  # warm up
    t0 = time.perf_counter()
    for _ in range(repeats):
        mod.contrast_terms(*args)
    return (time.perf_counter() - t0) / repeats


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--n", type=int, default=8000)
    ap.add_argument("--repeats", type=int, default=100)
    args = ap.parse_args()

    if kernels_c is None:
        print("compiled backend unavailable; nothing to compare")
        return

    print(f"n = {args.n}, {args.repeats} repeats per cell; times in microseconds")
    print(f"{'family':<14}{'order':>6}{'python':>12}{'c':>12}{'speedup':>9}")
    for label, kind, traj, th, p, q in _cases(args.n):
        for order in (0, 1, 2):
            tp = _time_call(kernels_py, kind, traj, th, p, q, order, args.repeats)
            tc = _time_call(kernels_c, kind, traj, th, p, q, order, args.repeats)
            print(f"{label:<14}{order:>6}{tp * 1e6:>12.1f}{tc * 1e6:>12.1f}"
                  f"{tp / tc:>9.2f}x")

    # end-to-end fit comparison on AR(2)
    import os
    import subprocess
    import sys

    code = (
        "import time, numpy as np, pencrit as pc\n"
        f"spec = pc.FamilySpec(pc.FamilyKind.ARX, p=2)\n"
        f"traj = pc.simulate_acx(spec, np.array([0.0, 0.5, 0.2, 1.0]), {args.n},"
        " rng=pc.RngStream(9))\n"
        "t0 = time.perf_counter()\n"
        "fit = pc.fit_mce(spec, traj, pc.ModelSubset((1, 2, 3, 4)))\n"
        "print('%s fit: %.3fs  contrast %.6f' %"
        " (pc.BACKEND_NAME, time.perf_counter() - t0, fit.contrast_at_min))\n"
    )
    for backend in ("python", "c"):
        env = dict(os.environ, PENCRIT_BACKEND=backend)
        subprocess.run([sys.executable, "-c", code], env=env, check=True)


if __name__ == "__main__":
    main()
