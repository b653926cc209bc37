#!/usr/bin/env python3
"""Throughput comparison of the compiled and pure-Python simulation kernels.

The two backends are bit-identical (asserted below on a shared workload);
this script only quantifies the speed gap.  Pure-Python replicate counts are
kept small so the benchmark finishes in seconds.

Usage: python benchmarks/bench_backends.py [--n N] [--dt DT]
"""
import argparse
import time

import numpy as np

from cbjump.mechanism import BranchingMechanism, ExpDensity, FiniteAtoms, StablePower
from cbjump.simulate import SimConfig, available_backends, run_ensemble

WORKLOADS = {
    "atoms (diffusion + unit atom)": (
        BranchingMechanism(0.0, 1.0, FiniteAtoms(((1.0, 1.0),))),
        dict(eps=0.0),
    ),
    "stable (cutoff 0.01, diffusion mode)": (
        BranchingMechanism(0.0, 0.0, StablePower(1.5, 1.0)),
        dict(eps=0.01, small_jump_mode="diffusion"),
    ),
    "subcritical exponential": (
        BranchingMechanism(1.0, 0.0, ExpDensity(1.0, 1.0)),
        dict(eps=0.0),
    ),
}


def bench(backend: str, mech, kw, n: int, dt: float) -> float:
    cfg = SimConfig(dt=dt, horizon=1.0, seed=42, n=n, marks=(1.0,), **kw)
    t0 = time.perf_counter()
    run_ensemble(mech, 1.0, cfg, backend=backend)
    elapsed = time.perf_counter() - t0
    return n * int(round(1.0 / dt)) / elapsed  # replicate-steps per second


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--n", type=int, default=20000, help="replicates for the compiled kernel")
    ap.add_argument("--dt", type=float, default=1e-3)
    args = ap.parse_args()

    backends = available_backends()
    print(f"available backends: {backends}")
    if "cython" not in backends:
        print("compiled kernel missing; nothing to compare")
        return

    # parity gate: identical output on a shared slice before timing anything
    mech, kw = WORKLOADS["atoms (diffusion + unit atom)"]
    cfg = SimConfig(dt=5e-3, horizon=0.5, seed=7, n=64, marks=(0.5,), **kw)
    a = run_ensemble(mech, 1.0, cfg, backend="cython")
    b = run_ensemble(mech, 1.0, cfg, backend="python")
    assert np.array_equal(a.x_at, b.x_at) and np.array_equal(a.supjump, b.supjump)
    print("parity: identical output on the shared workload\n")

    n_py = max(args.n // 64, 32)
    header = f"{'workload':42s} {'cython steps/s':>16s} {'python steps/s':>16s} {'speedup':>9s}"
    print(header)
    print("-" * len(header))
    for name, (mech, kw) in WORKLOADS.items():
        fast = bench("cython", mech, kw, args.n, args.dt)
        slow = bench("python", mech, kw, n_py, args.dt)
        print(f"{name:42s} {fast:16.3g} {slow:16.3g} {fast / slow:8.0f}x")


if __name__ == "__main__":
    main()
