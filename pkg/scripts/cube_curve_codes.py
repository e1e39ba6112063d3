#!/usr/bin/env python3
"""Analyse the cube with an inner curve using three atoms and summarise code magnitudes."""
import argparse

from lpfield.experiments import cube_curve_codes


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--n", type=int, default=40_000)
    ap.add_argument("--d", type=int, default=3)
    ap.add_argument("--seed", type=int, default=42)
    args = ap.parse_args()
    for key, val in cube_curve_codes(args.n, args.d, args.seed).items():
        print(f"{key}: {val:.4g}" if isinstance(val, float) else f"{key}: {val}")


if __name__ == "__main__":
    main()
