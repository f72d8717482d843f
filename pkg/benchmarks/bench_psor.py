"""Compare the compiled and numpy PSOR backends on the flat 2D scenario.

    python3 benchmarks/bench_psor.py [--sizes 65 129 257] [--sweeps 200]

Prints seconds per sweep and the time to a converged solve for each backend.
"""

import argparse
import time

import numpy as np

from thinobs.assembly import assemble_lcp
from thinobs.grid import Grid
from thinobs.scenarios import get_scenario
from thinobs.solver import BACKEND, SolverConfig, _Sweeper, optimal_omega, psor_solve


def per_sweep(sys, backend, omega, sweeps):
    sweeper = _Sweeper(sys.A, backend)
    lower = sys.lower_bounds()
    u = np.maximum(np.zeros(sys.size), lower)
    sweeper(u, sys.b, lower, omega, 1)  # warm-up
    t0 = time.perf_counter()
    sweeper(u, sys.b, lower, omega, sweeps)
    return (time.perf_counter() - t0) / sweeps


def full_solve(sys, backend, omega):
    t0 = time.perf_counter()
    u, rep = psor_solve(sys, SolverConfig(omega=omega, backend=backend))
    return time.perf_counter() - t0, rep.sweeps, rep.converged, sys.from_field(u)


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--sizes", type=int, nargs="+", default=[65, 129, 257])
    ap.add_argument("--sweeps", type=int, default=200)
    ap.add_argument("--no-solve", action="store_true", help="skip the converged-solve timing")
    args = ap.parse_args(argv)

    backends = ["numpy"] + (["cython"] if BACKEND == "cython" else [])
    if len(backends) == 1:
        print("compiled kernel unavailable; timing the numpy backend only")
    scn = get_scenario("flat-oracle-2d")
    print(f"{'m':>5s} {'backend':8s} {'us/sweep':>10s} {'solve/s':>9s} {'sweeps':>7s}")
    for m in args.sizes:
        grid = Grid(2, 1.0, m)
        sys = assemble_lcp(scn.problem(grid))
        omega = optimal_omega(grid)
        solutions = {}
        for b in backends:
            t_sweep = per_sweep(sys, b, omega, args.sweeps)
            if args.no_solve:
                print(f"{m:5d} {b:8s} {1e6 * t_sweep:10.1f}")
                continue
            t_solve, n, ok, u = full_solve(sys, b, omega)
            solutions[b] = u
            flag = "" if ok else "  (not converged)"
            print(f"{m:5d} {b:8s} {1e6 * t_sweep:10.1f} {t_solve:9.3f} {n:7d}{flag}")
        if len(solutions) == 2:
            diff = np.max(np.abs(solutions["numpy"] - solutions["cython"]))
            print(f"{'':5s} max |numpy - cython| = {diff:.2e}")


if __name__ == "__main__":
    main()
