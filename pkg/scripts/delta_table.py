"""Table of toric delta_m upper bounds for the named reflexive polytopes.

    python3 scripts/delta_table.py --polytopes P1 P2 P1xP1 Bl1P2 --m-max 6 --bound 3
"""

import argparse

from quantding.delta import delta_m_toric
from quantding.polytope import NAMED_POLYTOPES


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--polytopes", nargs="+", default=list(NAMED_POLYTOPES))
    ap.add_argument("--m-max", type=int, default=6)
    ap.add_argument("--bound", type=int, default=3)
    args = ap.parse_args()
    for name in args.polytopes:
        P = NAMED_POLYTOPES[name]()
        print(f"{name}:")
        for m in range(1, args.m_max + 1):
            res = delta_m_toric(P, m, bound=args.bound)
            print(f"  m={m:<3} delta_m <= {str(res.ratio):>8} = {float(res.ratio):.6f}  at v = {res.argmin}")


if __name__ == "__main__":
    main()
