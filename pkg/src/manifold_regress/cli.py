"""Command-line entry point.

Subcommands::

    simulate    draw a synthetic dataset (sphere, grassmann, landmarks, prices)
    fit         leave-one-out fit of a dataset, with per-row residuals
    predict     predict at query covariates
    cv          cross-validate the bandwidth
    bench       time extrinsic vs intrinsic single predictions on sphere data
    experiment  run a named experiment into an output directory

Exit codes: 0 success, 1 usage error, 2 data error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from .errors import DataError, NumericalError
from .experiments import (
    BENCH_HEADER,
    EXPERIMENTS,
    SphereCompareConfig,
    config_from_dict,
    leave_one_out,
    time_single_prediction,
)
from .io import (
    LandmarkRecord,
    PriceTable,
    ingest_landmarks,
    read_csv,
    read_dataset,
    write_csv,
    write_dataset,
    write_landmarks,
    write_prices,
)
from .kernels import GAUSSIAN, KernelSpec
from .regression import Dataset, FitConfig, IntrinsicConfig, Prediction, predict_batch
from .selection import DEFAULT_GRID, METRICS, CvPlan, cross_validate
from .simulate import (
    GrassmannSimConfig,
    SphereSimConfig,
    simulate_grassmann_process,
    simulate_landmark_records,
    simulate_prices,
    simulate_sphere_regression,
)

log = logging.getLogger("manifold_regress")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERICAL = 0, 1, 2, 3
METHODS = {"extrinsic": "mean", "median": "median", "intrinsic": "intrinsic"}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _bandwidth_arg(text: str):
    """``0.5`` or a comma list ``0.5,1,2``."""
    try:
        vals = [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a number or comma list: {text!r}") from None
    if not vals or any(v <= 0 for v in vals):
        raise argparse.ArgumentTypeError("bandwidths must be positive")
    return vals


def _load_config(path) -> dict:
    if path is None:
        return {}
    try:
        values = json.loads(Path(path).read_text())
    except FileNotFoundError:
        raise DataError("config file not found", path=str(path)) from None
    except json.JSONDecodeError as exc:
        raise DataError(f"invalid JSON: {exc.msg}", path=str(path), line=exc.lineno) from None
    if not isinstance(values, dict):
        raise DataError("config must be a JSON object", path=str(path))
    return values


def _load_data(path, fmt: str) -> Dataset:
    if fmt == "landmarks":
        ingest = ingest_landmarks(path)
        for err in ingest.errors:
            log.warning("skipped row: %s", err)
        return ingest.dataset
    return read_dataset(path)[0]


def _fit_config(args, cfg: dict, bandwidth=None) -> FitConfig:
    """FitConfig from config-file keys, overridden by flags."""
    method = args.method or cfg.get("method", "extrinsic")
    kernel = args.kernel or cfg.get("kernel", "gaussian")
    degree = args.degree if args.degree is not None else cfg.get("degree", 0)
    if bandwidth is None:
        bw = args.bandwidth if args.bandwidth is not None else cfg.get("bandwidth", 1.0)
        bandwidth = bw[0] if isinstance(bw, list) and len(bw) == 1 else bw
        if isinstance(bandwidth, list):
            bandwidth = tuple(bandwidth)
    spec = KernelSpec("mixed", int(cfg.get("binary_index", 0))) if kernel == "mixed" else GAUSSIAN
    intrinsic = IntrinsicConfig(**cfg.get("intrinsic", {}))
    try:
        return FitConfig(bandwidth=bandwidth, kernel=spec, degree=int(degree), estimator=METHODS[method], intrinsic=intrinsic)
    except (KeyError, ValueError, TypeError) as exc:
        raise UsageError(str(exc)) from None


def _prediction_rows(data: Dataset, queries, results):
    mf = data.manifold
    header = [f"x{j + 1}" for j in range(data.m)] + [f"y{j + 1}" for j in range(mf.row_width)]
    header += ["effective_n", "khat", "error"]
    rows = []
    for q, r in zip(queries, results):
        if isinstance(r, Prediction):
            khat = r.k_hat if r.k_hat is not None else ""
            rows.append(list(q) + list(mf.to_row(r.point)) + [r.effective_n, khat, ""])
        else:
            rows.append(list(q) + [""] * mf.row_width + ["", "", type(r).__name__])
    return header, rows


def cmd_simulate(args, cfg) -> int:
    kind = args.kind
    seed = args.seed if args.seed is not None else cfg.get("seed", 0)
    out = Path(args.out)
    if kind == "sphere":
        sim = simulate_sphere_regression(SphereSimConfig(args.n or cfg.get("n", 200), args.kappa or cfg.get("kappa", 10.0), seed))
        write_dataset(sim.data, out, {"mu": sim.means})
    elif kind == "grassmann":
        keys = {k: cfg[k] for k in ("n1", "n2", "kappa", "m") if k in cfg}
        if args.kappa is not None:
            keys["kappa"] = args.kappa
        sim = simulate_grassmann_process(GrassmannSimConfig(seed=seed, **keys))
        write_dataset(sim.data, out)
    elif kind == "landmarks":
        recs = simulate_landmark_records(n=args.n or cfg.get("n", 120), k=cfg.get("k", 50), seed=seed)
        write_landmarks([LandmarkRecord(*r) for r in recs], out)
    else:
        dates, values = simulate_prices(n_weeks=args.n or cfg.get("n_weeks", 30), n_assets=cfg.get("n_assets", 5), seed=seed)
        write_prices(PriceTable(tuple(dates), tuple(f"asset{j + 1}" for j in range(values.shape[1])), values), out)
    print(f"wrote {out}")
    return EXIT_OK


def cmd_fit(args, cfg) -> int:
    data = _load_data(args.data, args.format)
    config = _fit_config(args, cfg)
    res = leave_one_out(data, config)
    rows = [[i + 1, res.covariate[i], res.k_hat[i], res.residual[i], res.consecutive[i]] for i in range(data.n)]
    write_csv(args.out, ["row", "x1", "khat", "residual", "consecutive_distance"], rows)
    print(f"median leave-one-out residual {res.median_residual:.6g}; {len(res.errors)} failed rows")
    return EXIT_NUMERICAL if len(res.errors) == data.n else EXIT_OK


def cmd_predict(args, cfg) -> int:
    data = _load_data(args.data, args.format)
    table = read_csv(args.queries)
    cols = [j for j, c in enumerate(table.header) if c.startswith("x")]
    if len(cols) != data.m:
        raise DataError(f"queries have {len(cols)} x-columns, dataset has {data.m}", path=str(args.queries))
    queries = []
    for lineno, fields in table.rows:
        try:
            queries.append([float(fields[j]) for j in cols])
        except (ValueError, IndexError):
            raise DataError("bad query row", path=str(args.queries), line=lineno) from None
    results = predict_batch(data, _fit_config(args, cfg), queries, workers=args.workers)
    header, rows = _prediction_rows(data, queries, results)
    write_csv(args.out, header, rows)
    failed = sum(not isinstance(r, Prediction) for r in results)
    print(f"wrote {len(rows)} predictions to {args.out} ({failed} failed)")
    return EXIT_NUMERICAL if queries and failed == len(queries) else EXIT_OK


def cmd_cv(args, cfg) -> int:
    data = _load_data(args.data, args.format)
    grid = args.bandwidth if args.bandwidth is not None else cfg.get("grid", list(DEFAULT_GRID))
    seed = args.seed if args.seed is not None else cfg.get("seed", 0)
    plan = CvPlan(tuple(grid), folds=args.folds or cfg.get("folds", 10), metric=args.metric or cfg.get("metric", "intrinsic"), seed=seed)
    if plan.folds > data.n:
        raise UsageError(f"{plan.folds} folds but only {data.n} observations")
    report = cross_validate(data, _fit_config(args, cfg, bandwidth=1.0), plan, workers=args.workers)
    rows = [[str(b), s] for b, s in zip(report.bandwidths, report.mean_scores)]
    if args.out:
        write_csv(args.out, ["bandwidth", "cv_score"], rows, {"chosen": str(report.chosen)})
    for b, s in rows:
        print(f"{b}\t{s:.6g}")
    print(f"chosen bandwidth {report.chosen} (score {report.chosen_score:.6g})")
    return EXIT_OK


def cmd_bench(args, cfg) -> int:
    seed = args.seed if args.seed is not None else cfg.get("seed", 0)
    n = args.n or cfg.get("n", 1950)
    kappa = args.kappa or cfg.get("kappa", 10.0)
    trials = cfg.get("timing_trials", 5)
    sim = simulate_sphere_regression(SphereSimConfig(n + 1, kappa, seed))
    train = sim.data.subset(np.arange(n))
    query = sim.data.covariates[n]
    bw = (args.bandwidth or [cfg.get("bandwidth", 0.5)])[0]
    ext = time_single_prediction(train, FitConfig(bandwidth=bw), query, trials)
    intr = time_single_prediction(train, FitConfig(bandwidth=bw, estimator="intrinsic"), query, trials)
    rows = [[kappa, n, "extrinsic", "", "", ext], [kappa, n, "intrinsic", "", "", intr]]
    if args.out:
        write_csv(args.out, BENCH_HEADER, rows, {"bandwidth": bw, "trials": trials})
    print(f"extrinsic {ext:.3e} s, intrinsic {intr:.3e} s, ratio {intr / ext:.1f}")
    return EXIT_OK


def cmd_experiment(args, cfg) -> int:
    cls, run = EXPERIMENTS[args.name]
    values = dict(cfg)
    if args.seed is not None:
        values["seed"] = args.seed
    if args.bandwidth is not None:
        values["bandwidth"] = args.bandwidth[0]
    if args.input is not None:
        key = {"finance": "prices", "shape": "landmarks"}.get(args.name)
        if key is None:
            raise UsageError(f"experiment {args.name} takes no input file")
        values[key] = str(args.input)
    if args.smoke and cls is not SphereCompareConfig:
        raise UsageError("--smoke is only defined for sphere-compare")
    try:
        if args.smoke:
            config = SphereCompareConfig.smoke(**{k: tuple(v) if isinstance(v, list) else v for k, v in values.items()})
        else:
            config = config_from_dict(cls, values)
    except (TypeError, ValueError) as exc:
        raise UsageError(str(exc)) from None
    out = Path(args.out)
    if args.name == "sphere-compare":
        recs, failures = run(config, out, workers=args.workers)
        print(f"{len(recs)} records, {len(failures)} failed cells -> {out}")
        return EXIT_OK if recs or not failures else EXIT_NUMERICAL
    result = run(config, out)
    if args.name == "sphere-rate":
        print(f"slope {result.slope:.4f} +/- {result.stderr:.4f} (expected {-4 / 7:.4f})")
    elif args.name in ("grassmann-synthetic", "finance"):
        res = result[0]
        print(f"dim accuracy {res.dim_accuracy:.3f}, median residual {res.median_residual:.4f}, "
              f"median consecutive distance {res.median_consecutive:.4f}")
    else:
        print(f"{len(result.records)} predicted shapes, {len(result.errors)} failed grid points")
    print(f"outputs in {out}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="manifold-regress", description="Extrinsic kernel regression on manifolds.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(sp, *, data=True, fit=True):
        sp.add_argument("--config", type=Path, help="JSON file of settings; flags take precedence")
        sp.add_argument("--seed", type=int)
        sp.add_argument("--workers", type=int, default=1)
        if data:
            sp.add_argument("--data", type=Path, required=True)
            sp.add_argument("--format", choices=("dataset", "landmarks"), default="dataset")
        if fit:
            sp.add_argument("--bandwidth", type=_bandwidth_arg, help="value, or comma list (one entry per covariate)")
            sp.add_argument("--degree", type=int)
            sp.add_argument("--kernel", choices=("gaussian", "mixed"))
            sp.add_argument("--method", choices=tuple(METHODS))

    s = sub.add_parser("simulate", help="write a synthetic dataset")
    s.add_argument("kind", choices=("sphere", "grassmann", "landmarks", "prices"))
    s.add_argument("--n", type=int)
    s.add_argument("--kappa", type=float)
    s.add_argument("--out", type=Path, required=True)
    common(s, data=False, fit=False)
    s.set_defaults(func=cmd_simulate)

    s = sub.add_parser("fit", help="leave-one-out fit with residuals")
    common(s)
    s.add_argument("--out", type=Path, required=True)
    s.set_defaults(func=cmd_fit)

    s = sub.add_parser("predict", help="predict at query covariates")
    common(s)
    s.add_argument("--queries", type=Path, required=True, help="CSV with columns x1..xm")
    s.add_argument("--out", type=Path, required=True)
    s.set_defaults(func=cmd_predict)

    s = sub.add_parser("cv", help="cross-validate the bandwidth; --bandwidth gives the grid")
    common(s)
    s.add_argument("--folds", type=int)
    s.add_argument("--metric", choices=METRICS)
    s.add_argument("--out", type=Path)
    s.set_defaults(func=cmd_cv)

    s = sub.add_parser("bench", help="single-prediction timing on simulated sphere data")
    common(s, data=False)
    s.add_argument("--n", type=int)
    s.add_argument("--kappa", type=float)
    s.add_argument("--out", type=Path)
    s.set_defaults(func=cmd_bench)

    s = sub.add_parser("experiment", help="run a named experiment")
    s.add_argument("name", choices=tuple(EXPERIMENTS))
    s.add_argument("--out", type=Path, required=True)
    s.add_argument("--input", type=Path, help="price CSV (finance) or landmark CSV (shape)")
    s.add_argument("--smoke", action="store_true", help="small preset (sphere-compare)")
    s.add_argument("--bandwidth", type=_bandwidth_arg)
    common(s, data=False, fit=False)
    s.set_defaults(func=cmd_experiment)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        cfg = _load_config(args.config)
        return args.func(args, cfg)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except OSError as exc:
        print(f"data error: {exc.filename}: {exc.strerror}", file=sys.stderr)
        return EXIT_DATA
    except NumericalError as exc:
        print(f"numerical failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except ValueError as exc:
        # config values rejected by a dataclass validator
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
