#!/usr/bin/env python3
"""Extrinsic vs intrinsic kernel regression on vMF sphere data.

Full sweep: kappa 1..20, 2000 observations with 50 held out, a training-size
sweep, 10-fold CV per method. The full sweep takes hours on one core; use
--smoke for the two-kappa preset.

    python scripts/sphere_compare.py --out results/sphere_compare --smoke
"""

import argparse
import logging
from pathlib import Path

from manifold_regress.experiments import SphereCompareConfig, run_sphere_compare


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--out", type=Path, default=Path("results/sphere_compare"))
    p.add_argument("--smoke", action="store_true")
    p.add_argument("--kappas", type=float, nargs="+")
    p.add_argument("--train-sizes", type=int, nargs="+")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--workers", type=int, default=1)
    args = p.parse_args()
    logging.basicConfig(level=logging.INFO)

    kw = {"seed": args.seed}
    if args.kappas:
        kw["kappas"] = tuple(args.kappas)
    if args.train_sizes:
        kw["train_sizes"] = tuple(args.train_sizes)
    cfg = SphereCompareConfig.smoke(**kw) if args.smoke else SphereCompareConfig(**kw)
    records, failures = run_sphere_compare(cfg, args.out, workers=args.workers)
    for r in records:
        print(f"kappa={r.kappa:g} n={r.n_train} {r.method:9s} mse={r.mse:.4f} pmse={r.pmse:.4f} secs={r.secs:.2e}")
    if failures:
        print(f"{len(failures)} failed cells, see {args.out / 'failures.csv'}")


if __name__ == "__main__":
    main()
