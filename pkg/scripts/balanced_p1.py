"""Balanced metrics on P^1 for a range of levels, both solver methods.

    python3 scripts/balanced_p1.py --m 2 3 4 5 --seed 0
"""

import argparse
import time

import numpy as np

from quantding.bergman import bergman_oscillation
from quantding.hermitian import random_hermitian
from quantding.model import build_p1_model
from quantding.solver import SolverConfig, solve_balanced


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--m", type=int, nargs="+", default=[2, 3, 4])
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()
    rng = np.random.default_rng(args.seed)
    print(f"{'m':>3} {'method':>12} {'status':>10} {'iters':>6} {'residual':>10} {'osc(rho)':>10} {'sec':>6}")
    for m in args.m:
        M = build_p1_model(m, 2 * m + 6)
        H0 = np.eye(M.N) + random_hermitian(rng, M.N, 0.5)
        for method in ("fixed-point", "gradient"):
            t0 = time.perf_counter()
            H, tr, status = solve_balanced(M, H0, SolverConfig(method=method))
            dt = time.perf_counter() - t0
            print(f"{m:>3} {method:>12} {status:>10} {len(tr) - 1:>6} {tr.residual[-1]:>10.2e} "
                  f"{bergman_oscillation(M, H):>10.2e} {dt:>6.2f}")


if __name__ == "__main__":
    main()
