"""Compare compiled and pure-numpy kernel throughput.

Run after an editable install:

    python benchmarks/bench_kernels.py [--n 100] [--steps 200000]

Prints steps/second per kernel and backend plus the speedup factor.
Both backends consume identical random streams, so the outputs are
checked to agree before timing.
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from btcsim import CollectiveSpinSystem, spin_coherent_state
from btcsim._kernels import BACKEND, _fallback

try:
    from btcsim._kernels import _core
except ImportError:
    _core = None


def _time(fn, repeats=3):
    best = float("inf")
    for _ in range(repeats):
        start = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - start)
    return best


def bench_phase(mod, steps):
    out = np.empty(steps // 100)

    def run():
        mod.phase_path(np.random.PCG64(11), np.pi / 2, 1.0, 1.0, 400.0,
                       1e-3, steps, 100, out)

    return run, lambda: out.copy()


def bench_jump(mod, system, steps):
    psi0 = spin_coherent_state(system, np.pi / 2, np.pi / 2)
    mags = np.empty((steps // 100, 3))
    jumps = np.empty(steps)
    state = {}

    def run():
        psi = psi0.copy()
        state["res"] = mod.jump_chunk(
            np.random.PCG64(11), psi, system.ladder, system.jpjm_diag,
            system.jz_diag, system.omega, system.kappa / system.N,
            0.15 / system.N, steps, 100, 1.0 / system.j, mags, jumps,
            0.0, 0.1,
        )

    return run, lambda: mags.copy()


def bench_homodyne(mod, system, steps):
    psi0 = spin_coherent_state(system, np.pi / 2, np.pi / 2)
    mags = np.empty((steps // 100, 3))
    cur = np.empty(steps)

    def run():
        psi = psi0.copy()
        mod.homodyne_chunk(
            np.random.PCG64(11), psi, system.ladder, system.jpjm_diag,
            system.jz_diag, system.omega, system.kappa / system.N,
            1e-4, steps, 100, 1.0 / system.j, mags, cur, 1e-3,
        )

    return run, lambda: mags.copy()


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--n", type=int, default=100)
    parser.add_argument("--steps", type=int, default=200_000)
    args = parser.parse_args()

    if _core is None:
        print("compiled backend unavailable; timing fallback only")
    print(f"active backend: {BACKEND}; N = {args.n}, {args.steps} steps\n")

    system = CollectiveSpinSystem(args.n, 1.0)
    cases = [
        ("phase_path", lambda mod: bench_phase(mod, args.steps)),
        ("jump_chunk", lambda mod: bench_jump(mod, system, args.steps)),
        ("homodyne_chunk", lambda mod: bench_homodyne(mod, system, args.steps)),
    ]
    header = f"{'kernel':<16}{'numpy (Msteps/s)':>18}{'cython (Msteps/s)':>19}{'speedup':>9}"
    print(header)
    print("-" * len(header))
    for name, make in cases:
        run_np, grab_np = make(_fallback)
        run_np()
        ref = grab_np()
        t_np = _time(run_np)
        rate_np = args.steps / t_np / 1e6
        if _core is not None:
            run_cy, grab_cy = make(_core)
            run_cy()
            if not np.allclose(grab_cy(), ref, atol=1e-9):
                raise SystemExit(f"{name}: backend outputs disagree")
            t_cy = _time(run_cy)
            rate_cy = args.steps / t_cy / 1e6
            print(f"{name:<16}{rate_np:>18.2f}{rate_cy:>19.2f}{t_np / t_cy:>8.1f}x")
        else:
            print(f"{name:<16}{rate_np:>18.2f}{'-':>19}{'-':>9}")


if __name__ == "__main__":
    main()
