#!/usr/bin/env python3
"""Empirical convergence rate of the extrinsic kernel estimator on the sphere.

Fits log MSE on log n with h = c * n^(-1/7) (three covariates) and compares the
slope with -4/7.

    python scripts/sphere_rate.py --out results/sphere_rate
"""

import argparse
from pathlib import Path

from manifold_regress.experiments import SphereRateConfig, run_sphere_rate


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--out", type=Path, default=Path("results/sphere_rate"))
    p.add_argument("--ns", type=int, nargs="+", default=[250, 500, 1000, 2000, 4000])
    p.add_argument("--replicates", type=int, default=20)
    p.add_argument("--kappa", type=float, default=10.0)
    p.add_argument("--h-scale", type=float, default=1.0)
    p.add_argument("--seed", type=int, default=0)
    args = p.parse_args()

    cfg = SphereRateConfig(tuple(args.ns), args.replicates, args.kappa, args.h_scale, seed=args.seed)
    res = run_sphere_rate(cfg, args.out)
    for n, h, m in zip(res.ns, res.bandwidths, res.mean_mse):
        print(f"n={int(n):5d} h={h:.3f} mse={m:.5f}")
    print(f"slope {res.slope:.3f} +/- {res.stderr:.3f}  (theory {-4 / 7:.3f})")


if __name__ == "__main__":
    main()
