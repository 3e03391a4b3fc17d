"""Destabilising direction on the blow-up of P^2 at a point.

Computes the quantised Ding slope along the toric one-parameter subgroup
xi and -xi, then runs the gradient solver and reports how the iterates
escape to infinity.

    python3 scripts/bl1p2_instability.py --m 1 --xi 1 1
"""

import argparse

import numpy as np

from quantding.bergman import GeodesicGenerator
from quantding.model import build_toric_model
from quantding.polytope import NAMED_POLYTOPES
from quantding.slopes import f_invariant
from quantding.solver import SolverConfig, solve_balanced


def main():
    ap = argparse.ArgumentParser(description="Ding slopes and solver divergence on Bl1P2")
    ap.add_argument("--m", type=int, default=1)
    ap.add_argument("--xi", type=int, nargs=2, default=[1, 1])
    ap.add_argument("--iters", type=int, default=300)
    args = ap.parse_args()

    T = build_toric_model(NAMED_POLYTOPES["Bl1P2"](), args.m)
    lam = T.toric.lattice @ np.array(args.xi)
    gen = GeodesicGenerator.diagonal(lam, integral=True)
    for sign, g in (("+", gen), ("-", gen.negated())):
        rep = f_invariant(T, g)
        print(f"f({sign}xi) = {rep.f_invariant:+.6f}  slope_L = {rep.slope_L:+.6f}  "
              f"trace = {rep.trace_term:+.6f}  gap = {rep.gap:.1e}")

    H, tr, status = solve_balanced(T, np.eye(T.N), SolverConfig(method="gradient", torus_reduce=True, max_iters=args.iters))
    eta = np.log(np.real(np.diag(H)))
    print(f"solver: {status} after {len(tr) - 1} iterations, D_m = {tr.ding[-1]:.4f}")
    print(f"corr(log diag H, lambda) = {np.corrcoef(eta, lam)[0, 1]:+.4f}")


if __name__ == "__main__":
    main()
