#!/usr/bin/env python3
"""Denoise the sphere with curve net at three noise levels and report RMSE ratios."""
import argparse
import dataclasses
import logging

from lpfield.experiments import NOISE_LEVELS, denoise_config, denoising_table


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--n", type=int, default=100_000)
    ap.add_argument("--levels", type=float, nargs="+", default=list(NOISE_LEVELS))
    ap.add_argument("--seed", type=int, default=1)
    ap.add_argument("--rounds", type=int, help="override the number of denoising rounds")
    ap.add_argument("-v", "--verbose", action="store_true")
    args = ap.parse_args()
    if args.verbose:
        logging.basicConfig(level=logging.INFO, format="%(asctime)s %(message)s")
        logging.getLogger("lpfield.analysis").setLevel(logging.WARNING)
    cfg = denoise_config(args.n)
    if args.rounds:
        cfg = dataclasses.replace(cfg, outer_rounds=args.rounds)
    print("target_rmse,sigma,rmse_noisy,rmse_denoised,ratio,surface,curve,rounds,seconds")
    for r in denoising_table(args.n, tuple(args.levels), args.seed, config=cfg):
        print(f"{r['level']},{r['sigma']:.4f},{r['rmse_noisy']:.4f},{r['rmse_denoised']:.4f},{r['ratio']:.3f},"
              f"{r['rmse_surface']:.4f},{r['rmse_curve']:.4f},{r['rounds']},{r['seconds']:.0f}")


if __name__ == "__main__":
    main()
