"""Coupled balanced pair on P^1 with -K = O(1) + O(1) and a coupled slope.

    python3 scripts/coupled_p1.py --m 2 --seed 3
"""

import argparse

import numpy as np

from quantding.bergman import GeodesicGenerator
from quantding.coupled import build_coupled_p1, check_measure_identity, coupled_slope, solve_coupled_balanced
from quantding.hermitian import random_hermitian


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--m", type=int, default=2)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()
    cm = build_coupled_p1((1, 1), args.m, 2 * args.m + 6)
    rng = np.random.default_rng(args.seed)
    init = [np.eye(n) + random_hermitian(rng, n, 0.5) for n in cm.sizes]
    print(f"measure identity residual: {check_measure_identity(cm, init):.2e}")
    forms, tr, status = solve_coupled_balanced(cm, init)
    print(f"solver: {status} after {len(tr) - 1} iterations, residual {tr.residual[-1]:.2e}")
    # balanced pairs on P^1 are unique only up to automorphisms, which act on
    # Sym^2 with eigenvalues (t^-2, 1, t^2) after normalising the determinant
    for i, H in enumerate(forms):
        H = H / np.exp(np.mean(np.log(np.linalg.eigvalsh(H))))
        print(f"  factor {i}: eigenvalues {np.round(np.linalg.eigvalsh(H), 8)}")
    n = cm.sizes[0]
    lam = np.zeros(n)
    lam[0] = 1
    rep = coupled_slope(cm, [GeodesicGenerator.diagonal(lam), GeodesicGenerator(np.zeros((n, n)))])
    print(f"coupled pairing along (diag(1,0,...), 0): {rep.pairing:.4f}  gap {rep.gap:.1e}")


if __name__ == "__main__":
    main()
