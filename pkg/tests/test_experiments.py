import json
from dataclasses import replace

import numpy as np
import pytest
from scipy.stats import spearmanr

from conftest import FIXTURES
from manifold_regress import experiments as ex
from manifold_regress.errors import EmptyNeighborhood
from manifold_regress.io import LandmarkRecord, read_csv, read_landmarks, write_landmarks
from manifold_regress.manifolds import PlanarShape, shape_from_landmarks
from manifold_regress.simulate import simulate_landmark_records

TINY_COMPARE = ex.SphereCompareConfig(
    kappas=(1.0, 4.0, 10.0, 20.0),
    n_total=230,
    n_test=30,
    train_sizes=(20, 200),
    folds=5,
    grid=(0.2, 0.4, 0.8, 1.6),
    timing_trials=1,
    methods=("extrinsic",),
)


def _rows(path):
    t = read_csv(path)
    return t.header, [f for _, f in t.rows]


# --------------------------------------------------------------------------
# configs
# --------------------------------------------------------------------------


@pytest.mark.parametrize(
    "bad",
    [
        {"kappas": ()},
        {"kappas": (0.0,)},
        {"n_test": 0},
        {"train_sizes": (1,)},
        {"train_sizes": (2000,)},
        {"timing_trials": 0},
        {"methods": ("median",)},
        {"cv_solver": "newton"},
    ],
)
def test_compare_config_validation(bad):
    with pytest.raises(ValueError):
        ex.SphereCompareConfig(**bad)


def test_other_config_validation():
    with pytest.raises(ValueError):
        ex.SphereRateConfig(ns=(100, 200, 400))
    with pytest.raises(ValueError):
        ex.SphereRateConfig(replicates=0)
    with pytest.raises(ValueError):
        ex.FinanceConfig()
    with pytest.raises(ValueError):
        ex.ShapeConfig()
    with pytest.raises(ValueError):
        ex.ShapeConfig(landmarks="x.csv", diags=(2,))


def test_smoke_preset_matches_protocol():
    s = ex.SphereCompareConfig.smoke()
    assert s.kappas == (1.0, 10.0) and s.train_sizes == (300,) and s.n_test == 30
    assert s.step_size == 0.01 and s.threshold == 0.001 and s.timing_trials == 5


def test_default_compare_config_matches_protocol():
    d = ex.SphereCompareConfig()
    assert d.kappas == tuple(range(1, 21)) and d.n_total == 2000 and d.n_test == 50
    assert d.train_sizes[0] == 2 and d.train_sizes[-1] == 1950 and d.folds == 10


def test_config_from_dict_rejects_unknown_and_restores_tuples():
    cfg = ex.config_from_dict(ex.SphereRateConfig, {"ns": [100, 200, 400, 800], "replicates": 2})
    assert cfg.ns == (100, 200, 400, 800)
    with pytest.raises(ValueError):
        ex.config_from_dict(ex.SphereRateConfig, {"n": 3})


def test_config_echo_round_trip(tmp_path):
    ex.echo_config(tmp_path, "sphere-compare", TINY_COMPARE)
    payload = json.loads((tmp_path / "config.json").read_text())
    assert payload.pop("experiment") == "sphere-compare"
    assert ex.config_from_dict(ex.SphereCompareConfig, payload) == TINY_COMPARE


def test_registry():
    assert set(ex.EXPERIMENTS) == {"sphere-compare", "sphere-rate", "grassmann-synthetic", "finance", "shape"}


# --------------------------------------------------------------------------
# sphere comparison
# --------------------------------------------------------------------------


@pytest.fixture(scope="module")
def compare_run(tmp_path_factory):
    out = tmp_path_factory.mktemp("compare")
    records, failures = ex.run_sphere_compare(TINY_COMPARE, out)
    return out, records, failures


def test_compare_csv_schema_and_round_trip(compare_run):
    out, records, failures = compare_run
    assert not failures
    header, rows = _rows(out / "sphere_compare.csv")
    assert header == ["kappa", "n_train", "method", "mse", "pmse", "secs"]
    back = ex.read_bench_csv(out / "sphere_compare.csv")
    assert len(back) == len(records) == 8
    for a, b in zip(records, back):
        assert (a.kappa, a.n_train, a.method, a.mse, a.pmse, a.secs) == (b.kappa, b.n_train, b.method, b.mse, b.pmse, b.secs)
        assert a.secs > 0 and a.pmse >= 0
    assert (out / "config.json").exists() and (out / "bandwidths.csv").exists()


def test_compare_is_deterministic(compare_run, tmp_path):
    _, records, _ = compare_run
    again, _ = ex.run_sphere_compare(TINY_COMPARE, tmp_path)
    assert [(r.mse, r.pmse, r.bandwidth) for r in again] == [(r.mse, r.pmse, r.bandwidth) for r in records]
    assert (tmp_path / "bandwidths.csv").read_text() == (compare_run[0] / "bandwidths.csv").read_text()


def test_predictive_mse_falls_with_concentration(compare_run):
    _, records, _ = compare_run
    at_max = [r for r in records if r.n_train == 200]
    rho = spearmanr([r.kappa for r in at_max], [r.pmse for r in at_max]).statistic
    assert rho < 0


def test_compare_isolates_failed_cells(monkeypatch, tmp_path):
    real = ex.evaluate_method

    def flaky(train, test, means, method, cfg, plan, bandwidth=None):
        if train.n == 20:
            raise EmptyNeighborhood("injected")
        return real(train, test, means, method, cfg, plan, bandwidth)

    monkeypatch.setattr(ex, "evaluate_method", flaky)
    cfg = replace(TINY_COMPARE, kappas=(5.0,))
    records, failures = ex.run_sphere_compare(cfg, tmp_path)
    assert [r.n_train for r in records] == [200]
    assert failures == [(5.0, 20, "extrinsic", "EmptyNeighborhood", "injected")]
    header, rows = _rows(tmp_path / "failures.csv")
    assert header == ["kappa", "n_train", "method", "error", "message"] and len(rows) == 1


def test_compare_parallel_matches_serial(compare_run):
    _, records, _ = compare_run
    par, _ = ex.run_sphere_compare(replace(TINY_COMPARE, kappas=(1.0, 20.0)), workers=2)
    ser = [r for r in records if r.kappa in (1.0, 20.0)]
    assert [(r.kappa, r.n_train, r.mse) for r in par] == [(r.kappa, r.n_train, r.mse) for r in ser]


def test_shared_bandwidth_option():
    cfg = replace(TINY_COMPARE, kappas=(10.0,), train_sizes=(60,), methods=("extrinsic", "intrinsic"), shared_bandwidth=True)
    records, _ = ex.run_sphere_compare(cfg)
    assert records[0].bandwidth == records[1].bandwidth


def test_timing_is_positive():
    from manifold_regress.regression import FitConfig
    from manifold_regress.simulate import SphereSimConfig, simulate_sphere_regression

    sim = simulate_sphere_regression(SphereSimConfig(n=50, kappa=5.0, seed=1))
    assert ex.time_single_prediction(sim.data, FitConfig(bandwidth=0.5), sim.data.covariates[0], 3) > 0


# --------------------------------------------------------------------------
# convergence rate
# --------------------------------------------------------------------------

TINY_RATE = ex.SphereRateConfig(ns=(100, 200, 400, 800), replicates=3, n_eval=30, bootstrap=100)


def test_rate_outputs_and_determinism(tmp_path):
    a = ex.run_sphere_rate(TINY_RATE, tmp_path)
    b = ex.run_sphere_rate(TINY_RATE)
    np.testing.assert_array_equal(a.mse, b.mse)
    assert a.slope == b.slope and a.stderr == b.stderr
    np.testing.assert_allclose(a.bandwidths, np.array(TINY_RATE.ns, dtype=float) ** (-1 / 7))
    header, rows = _rows(tmp_path / "sphere_rate.csv")
    assert header == ["n", "h", "mse", "mse_se"] and len(rows) == 4
    header, rows = _rows(tmp_path / "sphere_rate_fit.csv")
    assert header == ["slope", "stderr", "intercept", "expected"]
    assert float(rows[0][3]) == pytest.approx(-4 / 7)
    assert a.slope < 0


def test_rate_slope_stable_under_replicate_doubling():
    base = ex.SphereRateConfig(ns=(250, 500, 1000, 2000), replicates=6, n_eval=60, bootstrap=300)
    a = ex.run_sphere_rate(base)
    b = ex.run_sphere_rate(replace(base, replicates=12))
    assert abs(a.slope - b.slope) < a.stderr


def test_loglog_slope_exact():
    ns = np.array([10.0, 20, 40, 80])
    slope, intercept = ex._loglog_slope(ns, 3.0 * ns**-0.5)
    assert slope == pytest.approx(-0.5) and intercept == pytest.approx(np.log(3.0))


# --------------------------------------------------------------------------
# subspaces
# --------------------------------------------------------------------------

TINY_GRASS = ex.GrassmannSyntheticConfig(n1=8, n2=8, m=6, bandwidth=2.0)


def test_grassmann_outputs(tmp_path):
    res, dist, sim = ex.run_grassmann_synthetic(TINY_GRASS, tmp_path)
    header, rows = _rows(tmp_path / "grassmann_predictions.csv")
    assert header == ["t", "dim", "khat", "residual", "consecutive_distance"] and len(rows) == 16
    assert [int(r[1]) for r in rows] == [4] * 8 + [5] * 8
    assert np.all(res.residual >= 0) and np.isnan(res.consecutive[0])
    assert 0.0 <= res.dim_accuracy <= 1.0
    header, rows = _rows(tmp_path / "grassmann_distances.csv")
    assert len(header) == 17 and len(rows) == 16
    np.testing.assert_allclose(dist, dist.T)
    np.testing.assert_allclose(np.diag(dist), 0.0, atol=1e-7)
    header, _ = _rows(tmp_path / "grassmann_summary.csv")
    assert header[:3] == ["dim_accuracy", "median_residual", "median_consecutive"]
    assert read_csv(tmp_path / "grassmann_predictions.csv").meta == {"bandwidth": "2.0"}


def test_grassmann_rerun_identical(tmp_path):
    ex.run_grassmann_synthetic(TINY_GRASS, tmp_path / "a")
    ex.run_grassmann_synthetic(TINY_GRASS, tmp_path / "b")
    for name in ("grassmann_predictions.csv", "grassmann_distances.csv", "grassmann_summary.csv", "config.json"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_grassmann_cv_picks_grid_value():
    res, _, _ = ex.run_grassmann_synthetic(replace(TINY_GRASS, bandwidth=None, folds=4))
    assert res.bandwidth in ex.TIME_GRID


def test_finance_end_to_end(tmp_path):
    src = FIXTURES / "prices_weeks.csv"
    before = src.read_bytes()
    res, weekly = ex.run_finance_pipeline(ex.FinanceConfig(prices=str(src), folds=5), tmp_path)
    assert src.read_bytes() == before
    t = read_csv(tmp_path / "finance_predictions.csv")
    assert t.header == ["week", "khat", "residual", "consecutive_distance"]
    assert len(t.rows) == weekly.data.n == 20
    assert t.meta["weeks_dropped"] == "4"
    assert all(float(f[2]) >= 0 for _, f in t.rows)
    assert res.bandwidth in ex.TIME_GRID
    # week indices keep the gaps left by dropped weeks
    assert [int(f[0]) for _, f in t.rows][:5] == [0, 1, 2, 4, 5]


def test_finance_missing_file_is_data_error(tmp_path):
    with pytest.raises(OSError):
        ex.run_finance_pipeline(ex.FinanceConfig(prices=str(tmp_path / "nope.csv")))


def test_leave_one_out_on_sphere_marks_dims():
    from manifold_regress.regression import FitConfig
    from manifold_regress.simulate import SphereSimConfig, simulate_sphere_regression

    data = simulate_sphere_regression(SphereSimConfig(n=15, kappa=10.0, seed=0)).data
    res = ex.leave_one_out(data, FitConfig(bandwidth=1.0))
    assert np.all(res.dims == -1) and np.all(res.k_hat == -1)
    assert np.all(np.isfinite(res.residual))


# --------------------------------------------------------------------------
# shapes
# --------------------------------------------------------------------------


@pytest.fixture(scope="module")
def landmark_file(tmp_path_factory):
    path = tmp_path_factory.mktemp("lm") / "landmarks.csv"
    recs = simulate_landmark_records(n=60, k=12, seed=3)
    write_landmarks([LandmarkRecord(i, d, a, lm) for i, d, a, lm in recs], path)
    return path


def test_shape_predictions_and_weight_dump(landmark_file, tmp_path):
    cfg = ex.ShapeConfig(landmarks=str(landmark_file), bandwidth=2.0, dump_weights=True)
    res = ex.run_shape_regression(cfg, tmp_path)
    assert [(r.diag, r.age) for r in res.records] == [(d, a) for d in (0, 1) for a in (9.0, 12.0, 16.0, 19.0)]
    back = read_landmarks(tmp_path / "shape_predictions.csv")
    assert len(back.records) == 8 and back.records[0].k == 12
    header, rows = _rows(tmp_path / "shape_weights.csv")
    assert header == ["diag", "age", "train_id", "train_diag", "weight"]
    assert len(rows) == 8 * 60
    for diag, _, _, tdiag, w in res.weights:
        if diag != tdiag:
            assert w == 0.0
        else:
            assert w > 0.0


def test_shape_prediction_scale_is_mean_centroid_size(landmark_file):
    res = ex.run_shape_regression(ex.ShapeConfig(landmarks=str(landmark_file), bandwidth=2.0))
    src = read_landmarks(landmark_file).records
    scale = np.mean([np.linalg.norm(r.landmarks - r.landmarks.mean(axis=0)) for r in src])
    for r in res.records:
        assert np.linalg.norm(r.landmarks - r.landmarks.mean(axis=0)) == pytest.approx(scale)


def test_shape_localization(tmp_path):
    recs = simulate_landmark_records(n=30, k=10, seed=5)
    recs = [(i, 0, 10.0 + j, lm) for j, (i, _, _, lm) in enumerate(recs)]
    path = tmp_path / "lm.csv"
    write_landmarks([LandmarkRecord(*r) for r in recs], path)
    target = recs[7]
    cfg = ex.ShapeConfig(landmarks=str(path), bandwidth=0.01, ages=(target[2],), diags=(0,))
    res = ex.run_shape_regression(cfg)
    pred = shape_from_landmarks(res.records[0].landmarks)
    assert PlanarShape(10).distance(pred, shape_from_landmarks(target[3])) < 1e-8


def test_shape_out_of_range_age_is_logged(landmark_file, tmp_path):
    cfg = ex.ShapeConfig(landmarks=str(landmark_file), bandwidth=0.01, ages=(9.0, 500.0), diags=(0,))
    res = ex.run_shape_regression(cfg, tmp_path)
    assert [e[:3] for e in res.errors] == [(0, 500.0, "EmptyNeighborhood")]
    assert (tmp_path / "failures.csv").exists()


def test_shape_cv_uses_age_grid(landmark_file):
    res = ex.run_shape_regression(ex.ShapeConfig(landmarks=str(landmark_file), folds=5))
    assert res.bandwidth in ex.AGE_GRID
