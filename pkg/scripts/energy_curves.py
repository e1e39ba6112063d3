#!/usr/bin/env python3
"""Energy per outer iteration on the sinusoid and cube shapes, as CSV."""
import argparse

from lpfield.experiments import energy_curves


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--kinds", nargs="+", default=["sinusoid", "cube"])
    ap.add_argument("--n", type=int, default=20_000)
    ap.add_argument("--iters", type=int, default=10)
    ap.add_argument("--seed", type=int, default=42)
    args = ap.parse_args()
    print("kind,iteration,stage,l2,l1,total")
    for kind in args.kinds:
        res = energy_curves(kind, args.n, args.seed, outer_iters=args.iters)
        for rec in res["log"]:
            print(f"{kind},{rec['iteration']},{rec['stage']},{rec['l2']:.6g},{rec['l1']:.6g},{rec['total']:.6g}")


if __name__ == "__main__":
    main()
