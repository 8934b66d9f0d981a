"""Experiment harnesses: sphere comparison, convergence rate, subspace studies, shapes.

Each ``run_*`` function takes a config dataclass, optionally writes CSVs
plus an echo of its config into an output directory, and returns an
in-memory result. Results are reproducible from (config, seed) alone.
"""

from __future__ import annotations

import json
import logging
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Optional

import numpy as np

from .errors import ManifoldRegressError, NumericalError
from .io import (
    LandmarkRecord,
    ingest_landmarks,
    prices_to_weekly_eigenbases,
    read_csv,
    read_prices,
    write_csv,
    write_landmarks,
)
from .kernels import Bandwidth, KernelSpec, kernel_weights
from .manifolds import Grassmann, great_circle, shape_to_landmarks
from .regression import Dataset, FitConfig, IntrinsicConfig, predict
from .selection import DEFAULT_GRID, CvPlan, cross_validate, mse_metrics
from .simulate import (
    GrassmannSimConfig,
    SphereSimConfig,
    sample_sphere_covariates,
    simulate_grassmann_process,
    simulate_sphere_regression,
    sphere_mean_function,
)

log = logging.getLogger(__name__)

try:
    from threadpoolctl import threadpool_limits
except ImportError:  # pragma: no cover
    threadpool_limits = None


def _single_threaded():
    if threadpool_limits is None:  # pragma: no cover
        from contextlib import nullcontext

        return nullcontext()
    return threadpool_limits(limits=1)


def _cell_seed(*parts) -> int:
    return int(np.random.SeedSequence([int(p) for p in parts]).generate_state(1)[0])


def echo_config(out: Path, name: str, config) -> None:
    out.mkdir(parents=True, exist_ok=True)
    payload = {"experiment": name, **asdict(config)}
    (out / "config.json").write_text(json.dumps(payload, indent=2, sort_keys=True, default=str) + "\n")


def config_from_dict(cls, values: dict):
    """Build a config dataclass, turning JSON lists back into tuples."""
    known = {f.name for f in fields(cls)}
    unknown = set(values) - known
    if unknown:
        raise ValueError(f"unknown {cls.__name__} keys: {sorted(unknown)}")
    return cls(**{k: tuple(v) if isinstance(v, list) else v for k, v in values.items()})


def _plan_for(n: int, grid, folds: int, seed: int, metric: str = "intrinsic") -> CvPlan:
    return CvPlan(tuple(grid), folds=max(2, min(folds, n)), metric=metric, seed=seed)


# --------------------------------------------------------------------------
# sphere: extrinsic vs intrinsic
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class SphereCompareConfig:
    kappas: tuple = tuple(range(1, 21))
    n_total: int = 2000
    n_test: int = 50
    train_sizes: tuple = (2, 5, 10, 25, 50, 100, 250, 500, 1000, 1950)
    folds: int = 10
    grid: tuple = DEFAULT_GRID
    step_size: float = 0.01
    threshold: float = 0.001
    timing_trials: int = 5
    methods: tuple = ("extrinsic", "intrinsic")
    shared_bandwidth: bool = False  # intrinsic reuses the extrinsic CV choice
    cv_solver: str = "karcher"  # intrinsic solver during bandwidth search only
    seed: int = 0

    def __post_init__(self):
        if not self.kappas or any(k <= 0 for k in self.kappas):
            raise ValueError("kappas must be a nonempty list of positive values")
        if not 1 <= self.n_test < self.n_total:
            raise ValueError("need 1 <= n_test < n_total")
        if not self.train_sizes or any(not 2 <= s <= self.n_total - self.n_test for s in self.train_sizes):
            raise ValueError("train sizes must lie in [2, n_total - n_test]")
        if self.timing_trials < 1:
            raise ValueError("timing_trials must be >= 1")
        if set(self.methods) - {"extrinsic", "intrinsic"}:
            raise ValueError("methods must be extrinsic and/or intrinsic")
        if self.cv_solver not in ("descent", "karcher"):
            raise ValueError("cv_solver must be 'descent' or 'karcher'")

    @classmethod
    def smoke(cls, **kw):
        base = dict(kappas=(1.0, 10.0), n_total=330, n_test=30, train_sizes=(300,))
        base.update(kw)
        return cls(**base)


@dataclass
class BenchRecord:
    kappa: float
    n_train: int
    method: str
    mse: float
    pmse: float
    secs: float
    bandwidth: float = float("nan")


BENCH_HEADER = ["kappa", "n_train", "method", "mse", "pmse", "secs"]


def _method_config(method: str, bandwidth, cfg, solver: str = "descent") -> FitConfig:
    est = "intrinsic" if method == "intrinsic" else "mean"
    intrinsic = IntrinsicConfig(cfg.step_size, cfg.threshold, solver=solver)
    return FitConfig(bandwidth=bandwidth, estimator=est, intrinsic=intrinsic)


def time_single_prediction(train: Dataset, config: FitConfig, query, trials: int = 5) -> float:
    """Mean wall time of ``trials`` single predictions, measured single-threaded."""
    times = []
    with _single_threaded():
        for _ in range(trials):
            t0 = time.perf_counter()
            predict(train, config, query)
            times.append(time.perf_counter() - t0)
    return float(np.mean(times))


def evaluate_method(train: Dataset, test: Dataset, means, method: str, cfg, plan: CvPlan, bandwidth=None):
    """CV the bandwidth (unless given), predict the test points and time one prediction.

    Test predictions and timings always use the fixed-step descent.
    """
    if bandwidth is None:
        bandwidth = cross_validate(train, _method_config(method, 1.0, cfg, cfg.cv_solver), plan).chosen
    config = _method_config(method, bandwidth, cfg)
    preds = [predict(train, config, x).point for x in test.covariates]
    metrics = mse_metrics(preds, list(means), train.manifold, realized=list(test.responses))
    secs = time_single_prediction(train, config, test.covariates[0], cfg.timing_trials)
    return metrics, secs, Bandwidth.coerce(bandwidth, train.m)


def _sphere_compare_cell(args):
    kappa, cfg = args
    sim = simulate_sphere_regression(SphereSimConfig(cfg.n_total, kappa, _cell_seed(cfg.seed, round(kappa * 1000))))
    n_fit = cfg.n_total - cfg.n_test
    test = sim.data.subset(np.arange(n_fit, cfg.n_total))
    means = sim.means[n_fit:]
    records, failures = [], []
    for n_train in cfg.train_sizes:
        train = sim.data.subset(np.arange(n_train))
        plan = _plan_for(n_train, cfg.grid, cfg.folds, cfg.seed)
        chosen = {}
        for method in cfg.methods:
            shared = chosen.get("extrinsic") if method == "intrinsic" and cfg.shared_bandwidth else None
            try:
                metrics, secs, bw = evaluate_method(train, test, means, method, cfg, plan, shared)
            except ManifoldRegressError as exc:
                log.warning("sphere-compare cell kappa=%s n=%s %s failed: %s", kappa, n_train, method, exc)
                failures.append((kappa, n_train, method, type(exc).__name__, str(exc)))
                continue
            chosen[method] = bw
            h = bw.scalar if bw.scalar is not None else bw.det
            records.append(BenchRecord(kappa, n_train, method, metrics["mse"], metrics["predictive_mse"], secs, h))
    return records, failures


def run_sphere_compare(cfg: SphereCompareConfig, out: Optional[Path] = None, workers: int = 1):
    cells = [(float(k), cfg) for k in cfg.kappas]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_sphere_compare_cell, cells))
    else:
        results = [_sphere_compare_cell(c) for c in cells]
    records = [r for recs, _ in results for r in recs]
    failures = [f for _, fails in results for f in fails]
    if out is not None:
        out = Path(out)
        echo_config(out, "sphere-compare", cfg)
        write_csv(
            out / "sphere_compare.csv",
            BENCH_HEADER,
            [[r.kappa, r.n_train, r.method, r.mse, r.pmse, r.secs] for r in records],
        )
        write_csv(out / "bandwidths.csv", ["kappa", "n_train", "method", "bandwidth"],
                  [[r.kappa, r.n_train, r.method, r.bandwidth] for r in records])
        if failures:
            write_csv(out / "failures.csv", ["kappa", "n_train", "method", "error", "message"], failures)
    return records, failures


def read_bench_csv(path) -> list:
    t = read_csv(path)
    return [
        BenchRecord(float(f[0]), int(f[1]), f[2], float(f[3]), float(f[4]), float(f[5])) for _, f in t.rows
    ]


# --------------------------------------------------------------------------
# sphere: convergence rate
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class SphereRateConfig:
    ns: tuple = (250, 500, 1000, 2000, 4000)
    replicates: int = 20
    kappa: float = 10.0
    h_scale: float = 1.0
    n_eval: int = 200
    bootstrap: int = 500
    seed: int = 0

    def __post_init__(self):
        if len(self.ns) < 4:
            raise ValueError("the rate fit needs at least 4 sample sizes")
        if self.replicates < 1 or self.n_eval < 1:
            raise ValueError("replicates and n_eval must be >= 1")


@dataclass
class RateResult:
    ns: np.ndarray
    bandwidths: np.ndarray
    mse: np.ndarray  # (len(ns), replicates)
    slope: float
    stderr: float
    intercept: float

    @property
    def mean_mse(self) -> np.ndarray:
        return self.mse.mean(axis=1)


M_COVARIATES = 3


def _loglog_slope(ns, mse_mean):
    slope, intercept = np.polyfit(np.log(ns), np.log(mse_mean), 1)
    return float(slope), float(intercept)


def run_sphere_rate(cfg: SphereRateConfig, out: Optional[Path] = None) -> RateResult:
    """MSE against the true mean direction for h = h_scale * n^(-1/(m+4)), and its log-log slope.

    Replicate r draws one regression function and one evaluation sample and
    reuses them across all n. The slope's standard error is a bootstrap over
    replicates.
    """
    ns = np.asarray(cfg.ns, dtype=float)
    hs = cfg.h_scale * ns ** (-1.0 / (M_COVARIATES + 4))
    mse = np.zeros((ns.size, cfg.replicates))
    for r in range(cfg.replicates):
        rng = np.random.default_rng(_cell_seed(cfg.seed, r))
        beta = rng.standard_normal(3)
        x_eval = sample_sphere_covariates(cfg.n_eval, rng)
        mu_eval = sphere_mean_function(beta, x_eval)
        for i, n in enumerate(cfg.ns):
            sim = simulate_sphere_regression(SphereSimConfig(int(n), cfg.kappa, _cell_seed(cfg.seed, r, n), tuple(beta)))
            fit = FitConfig(bandwidth=float(hs[i]))
            errs = [great_circle(predict(sim.data, fit, x).point, m) ** 2 for x, m in zip(x_eval, mu_eval)]
            mse[i, r] = np.mean(errs)
    slope, intercept = _loglog_slope(ns, mse.mean(axis=1))
    brng = np.random.default_rng(_cell_seed(cfg.seed, 7))
    boots = [
        _loglog_slope(ns, mse[:, brng.integers(0, cfg.replicates, cfg.replicates)].mean(axis=1))[0]
        for _ in range(cfg.bootstrap)
    ]
    res = RateResult(ns, hs, mse, slope, float(np.std(boots, ddof=1)) if cfg.bootstrap > 1 else float("nan"), intercept)
    if out is not None:
        out = Path(out)
        echo_config(out, "sphere-rate", cfg)
        se = mse.std(axis=1, ddof=1) / np.sqrt(cfg.replicates) if cfg.replicates > 1 else np.full(ns.size, np.nan)
        write_csv(out / "sphere_rate.csv", ["n", "h", "mse", "mse_se"],
                  [[int(n), h, m, s] for n, h, m, s in zip(ns, hs, res.mean_mse, se)])
        write_csv(out / "sphere_rate_fit.csv", ["slope", "stderr", "intercept", "expected"],
                  [[slope, res.stderr, intercept, -4.0 / (M_COVARIATES + 4)]])
    return res


# --------------------------------------------------------------------------
# subspaces: synthetic process and weekly covariance eigenbases
# --------------------------------------------------------------------------

TIME_GRID = (0.5, 1.0, 1.5, 2.0, 3.0, 4.0, 5.0, 7.5, 10.0)


@dataclass
class LooResult:
    """Leave-one-out predictions; ``dims`` and ``k_hat`` are -1 off the Grassmannian."""

    covariate: np.ndarray
    dims: np.ndarray
    k_hat: np.ndarray
    residual: np.ndarray
    consecutive: np.ndarray  # distance to the previous observation; NaN for the first
    bandwidth: float
    errors: list = field(default_factory=list)

    @property
    def dim_accuracy(self) -> float:
        return float(np.mean(self.k_hat == self.dims))

    @property
    def median_residual(self) -> float:
        return float(np.nanmedian(self.residual))

    @property
    def median_consecutive(self) -> float:
        return float(np.nanmedian(self.consecutive))


def leave_one_out(data: Dataset, config: FitConfig) -> LooResult:
    mf = data.manifold
    n = data.n
    k_hat = np.full(n, -1)
    resid = np.full(n, np.nan)
    errors = []
    for i in range(n):
        mask = np.ones(n, dtype=bool)
        mask[i] = False
        try:
            p = predict(data.subset(mask), config, data.covariates[i])
        except NumericalError as exc:
            log.warning("leave-one-out prediction %d failed: %s", i, exc)
            errors.append((i, type(exc).__name__, str(exc)))
            continue
        k_hat[i] = p.k_hat if p.k_hat is not None else -1
        resid[i] = mf.distance(p.point, data.responses[i])
    cons = np.full(n, np.nan)
    for i in range(1, n):
        cons[i] = mf.distance(data.responses[i - 1], data.responses[i])
    if isinstance(mf, Grassmann):
        dims = np.array([y.shape[1] for y in data.responses])
    else:
        dims = np.full(n, -1)
    bw = config.bandwidth_for(data.m)
    return LooResult(data.covariates[:, 0].copy(), dims, k_hat, resid, cons, bw.h[0], errors)


def _loo_rows(res: LooResult):
    return [
        [c, d, k, r, cd] for c, d, k, r, cd in zip(res.covariate, res.dims, res.k_hat, res.residual, res.consecutive)
    ]


@dataclass(frozen=True)
class GrassmannSyntheticConfig:
    n1: int = 50
    n2: int = 50
    kappa: float = 1.0
    m: int = 10
    grid: tuple = TIME_GRID
    folds: int = 10
    bandwidth: Optional[float] = None
    seed: int = 0

    def sim_config(self) -> GrassmannSimConfig:
        return GrassmannSimConfig(self.n1, self.n2, self.kappa, self.m, self.seed)


def run_grassmann_synthetic(cfg: GrassmannSyntheticConfig, out: Optional[Path] = None):
    sim = simulate_grassmann_process(cfg.sim_config())
    data = sim.data
    bw = cfg.bandwidth
    if bw is None:
        bw = cross_validate(data, FitConfig(), _plan_for(data.n, cfg.grid, cfg.folds, cfg.seed)).chosen
    res = leave_one_out(data, FitConfig(bandwidth=bw))
    dist = np.array([[data.manifold.distance(a, b) for b in data.responses] for a in data.responses])
    if out is not None:
        out = Path(out)
        echo_config(out, "grassmann-synthetic", cfg)
        write_csv(out / "grassmann_predictions.csv", ["t", "dim", "khat", "residual", "consecutive_distance"],
                  _loo_rows(res), {"bandwidth": res.bandwidth})
        write_csv(out / "grassmann_distances.csv", ["t"] + [f"d{j + 1}" for j in range(data.n)],
                  [[i + 1] + list(row) for i, row in enumerate(dist)])
        write_csv(out / "grassmann_summary.csv",
                  ["dim_accuracy", "median_residual", "median_consecutive", "bandwidth", "acceptance_rate"],
                  [[res.dim_accuracy, res.median_residual, res.median_consecutive, res.bandwidth,
                    sim.stats.acceptance_rate]])
    return res, dist, sim


@dataclass(frozen=True)
class FinanceConfig:
    prices: str = ""
    eig_threshold: float = 1e-10
    full_week_days: Optional[int] = 5
    grid: tuple = TIME_GRID
    folds: int = 10
    bandwidth: Optional[float] = None
    seed: int = 0

    def __post_init__(self):
        if not self.prices:
            raise ValueError("finance pipeline needs a price CSV path (prices=...)")


def run_finance_pipeline(cfg: FinanceConfig, out: Optional[Path] = None):
    table = read_prices(cfg.prices)
    weekly = prices_to_weekly_eigenbases(table, cfg.eig_threshold, cfg.full_week_days)
    data = weekly.data
    bw = cfg.bandwidth
    if bw is None:
        bw = cross_validate(data, FitConfig(), _plan_for(data.n, cfg.grid, cfg.folds, cfg.seed)).chosen
    res = leave_one_out(data, FitConfig(bandwidth=bw))
    if out is not None:
        out = Path(out)
        echo_config(out, "finance", cfg)
        write_csv(out / "finance_predictions.csv", ["week", "khat", "residual", "consecutive_distance"],
                  [[int(c), k, r, cd] for c, k, r, cd in zip(res.covariate, res.k_hat, res.residual, res.consecutive)],
                  {"bandwidth": res.bandwidth, "weeks_kept": data.n, "weeks_dropped": len(weekly.dropped)})
    return res, weekly


# --------------------------------------------------------------------------
# planar shapes
# --------------------------------------------------------------------------

AGE_GRID = (0.5, 1.0, 2.0, 4.0, 8.0, 16.0)


@dataclass(frozen=True)
class ShapeConfig:
    landmarks: str = ""
    ages: tuple = (9.0, 12.0, 16.0, 19.0)
    diags: tuple = (0, 1)
    bandwidth: Optional[float] = None
    grid: tuple = AGE_GRID
    folds: int = 10
    dump_weights: bool = False
    seed: int = 0

    def __post_init__(self):
        if not self.landmarks:
            raise ValueError("shape regression needs a landmark CSV path (landmarks=...)")
        if set(self.diags) - {0, 1}:
            raise ValueError("diagnosis values must be 0 or 1")


MIXED = KernelSpec("mixed", binary_index=0)


@dataclass
class ShapeResult:
    records: list  # LandmarkRecord per (diag, age) grid point
    bandwidth: float
    weights: list  # (diag, age, train_id, train_diag, weight) when dumped
    errors: list


def run_shape_regression(cfg: ShapeConfig, out: Optional[Path] = None) -> ShapeResult:
    ingest = ingest_landmarks(cfg.landmarks)
    for err in ingest.errors:
        log.warning("skipped landmark row: %s", err)
    data = ingest.dataset
    if cfg.bandwidth is None:
        bw = cross_validate(data, FitConfig(kernel=MIXED), _plan_for(data.n, cfg.grid, cfg.folds, cfg.seed)).chosen
    else:
        bw = Bandwidth.isotropic(cfg.bandwidth, 2)
    fit = FitConfig(bandwidth=bw, kernel=MIXED)
    scale = float(np.mean([np.linalg.norm(r.landmarks - r.landmarks.mean(axis=0)) for r in ingest.records]))
    records, weights, errors = [], [], []
    for diag in cfg.diags:
        for age in cfg.ages:
            q = np.array([float(diag), float(age)])
            try:
                p = predict(data, fit, q)
            except NumericalError as exc:
                log.warning("shape prediction diag=%s age=%s failed: %s", diag, age, exc)
                errors.append((diag, age, type(exc).__name__, str(exc)))
                continue
            records.append(LandmarkRecord(f"pred_d{diag}_a{age:g}", int(diag), float(age), shape_to_landmarks(p.point, scale)))
            if cfg.dump_weights:
                w = kernel_weights(MIXED, bw, q, data.covariates)
                weights += [(diag, age, rid, int(x[0]), wi) for rid, x, wi in zip(data.ids, data.covariates, w)]
    result = ShapeResult(records, bw.h[1], weights, errors)
    if out is not None:
        out = Path(out)
        echo_config(out, "shape", cfg)
        if records:
            write_landmarks(records, out / "shape_predictions.csv", {"bandwidth": bw.h[1]})
        if cfg.dump_weights:
            write_csv(out / "shape_weights.csv", ["diag", "age", "train_id", "train_diag", "weight"], weights)
        if errors:
            write_csv(out / "failures.csv", ["diag", "age", "error", "message"], errors)
    return result


EXPERIMENTS = {
    "sphere-compare": (SphereCompareConfig, run_sphere_compare),
    "sphere-rate": (SphereRateConfig, run_sphere_rate),
    "grassmann-synthetic": (GrassmannSyntheticConfig, run_grassmann_synthetic),
    "finance": (FinanceConfig, run_finance_pipeline),
    "shape": (ShapeConfig, run_shape_regression),
}
