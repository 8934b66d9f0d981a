import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import seeds, unit
from manifold_regress.errors import DimensionMismatch, EmptyNeighborhood
from manifold_regress.kernels import Bandwidth
from manifold_regress.manifolds import Sphere
from manifold_regress.regression import Dataset, FitConfig
from manifold_regress.selection import (
    DEFAULT_GRID,
    CvPlan,
    cross_validate,
    fold_assignment,
    mean_squared_distance,
    mse_metrics,
    squared_residual,
)
from manifold_regress.simulate import SphereSimConfig, simulate_sphere_regression

S2 = Sphere(2)
E1, E2, E3 = np.eye(3)


def small_sphere(seed=0, n=40):
    return simulate_sphere_regression(SphereSimConfig(n=n, kappa=10.0, seed=seed)).data


def test_default_grid():
    assert DEFAULT_GRID[0] == 0.1 and DEFAULT_GRID[-1] == 2.0 and len(DEFAULT_GRID) == 20


def test_plan_validation():
    with pytest.raises(ValueError):
        CvPlan(folds=1)
    with pytest.raises(ValueError):
        CvPlan(bandwidth_grid=())
    with pytest.raises(ValueError):
        CvPlan(metric="l1")


@given(st.integers(2, 200), st.integers(2, 20), seeds)
def test_folds_partition_indices(n, k, seed):
    if k > n:
        with pytest.raises(ValueError):
            fold_assignment(n, k, seed)
        return
    folds = fold_assignment(n, k, seed)
    assert len(folds) == k
    np.testing.assert_array_equal(np.sort(np.concatenate(folds)), np.arange(n))
    sizes = [len(f) for f in folds]
    assert max(sizes) - min(sizes) <= 1
    for a, b in zip(folds, fold_assignment(n, k, seed)):
        np.testing.assert_array_equal(a, b)


def test_constant_responses_choose_smallest():
    data = Dataset(np.linspace(0, 1, 20), (unit([1, 1, 0]),) * 20, S2)
    rep = cross_validate(data, FitConfig(), CvPlan(bandwidth_grid=(0.5, 0.3, 1.0), folds=4))
    np.testing.assert_allclose(rep.mean_scores, 0.0, atol=1e-24)
    assert rep.chosen.scalar == 0.3


def test_single_bandwidth_grid():
    rep = cross_validate(small_sphere(), FitConfig(), CvPlan(bandwidth_grid=(0.7,), folds=5))
    assert rep.chosen == Bandwidth.coerce(0.7, 3) and rep.fold_scores.shape == (1, 5)


def test_chosen_attains_minimum_and_is_reproducible():
    data = small_sphere(1, n=60)
    plan = CvPlan(bandwidth_grid=(0.2, 0.5, 1.0, 2.0), folds=5, seed=3)
    a = cross_validate(data, FitConfig(), plan)
    b = cross_validate(data, FitConfig(), plan, workers=3)
    np.testing.assert_array_equal(a.fold_scores, b.fold_scores)
    assert a.chosen_index == b.chosen_index
    assert np.all(a.mean_scores >= 0)
    assert a.chosen_score == a.mean_scores.min()


def test_empty_neighborhood_scores_infinity():
    x = np.array([0.0, 0.1, 0.2, 10.0, 10.1, 10.2])
    data = Dataset(x, tuple(unit([1, i * 0.1, 0]) for i in range(6)), S2)
    # at h=0.001 every held-out covariate is 100 bandwidths from its neighbors
    plan = CvPlan(bandwidth_grid=(0.001, 50.0), folds=2, seed=0)
    rep = cross_validate(data, FitConfig(), plan)
    assert np.isinf(rep.mean_scores[0]) and np.isfinite(rep.mean_scores[1])
    assert rep.chosen.scalar == 50.0


def test_all_infinite_raises():
    data = Dataset(np.arange(4.0) * 100, tuple(unit([1, i, 0]) for i in range(4)), S2)
    with pytest.raises(EmptyNeighborhood):
        cross_validate(data, FitConfig(), CvPlan(bandwidth_grid=(0.01,), folds=2))


def test_anisotropic_grid_accepted():
    data = small_sphere(2)
    grid = (Bandwidth((0.3, 0.3, 1.0)), Bandwidth((1.0, 1.0, 0.3)))
    rep = cross_validate(data, FitConfig(), CvPlan(bandwidth_grid=grid, folds=4))
    assert rep.bandwidths == list(grid)


@given(st.floats(0.01, 5.0), st.integers(1, 5))
def test_scalar_bandwidth_round_trip(h, m):
    bw = Bandwidth.coerce(h, m)
    assert bw.h == (h,) * m and bw.scalar == h


def test_extrinsic_metric():
    assert squared_residual(S2, "extrinsic", E1, E2) == pytest.approx(2.0)
    assert squared_residual(S2, "intrinsic", E1, E2) == pytest.approx((np.pi / 2) ** 2)


def test_mse_examples():
    assert mean_squared_distance([E1, E2], [E1, E2], S2) == 0.0
    assert mean_squared_distance([E1], [E2], S2) == pytest.approx((np.pi / 2) ** 2)
    assert mean_squared_distance([E1, E3], [E1, -E3], S2) == pytest.approx(np.pi**2 / 2)
    with pytest.raises(DimensionMismatch):
        mean_squared_distance([E1], [E1, E2], S2)
    out = mse_metrics([E1], [E1], S2, realized=[E2])
    assert out["mse"] == 0.0 and out["predictive_mse"] == pytest.approx((np.pi / 2) ** 2)
    assert np.isnan(mse_metrics([E1], [E1], S2)["predictive_mse"])


def test_interior_bandwidth_on_reference_sample():
    data = simulate_sphere_regression(SphereSimConfig(n=200, kappa=10.0, seed=0)).data
    rep = cross_validate(data, FitConfig(), CvPlan(folds=10, seed=0))
    assert DEFAULT_GRID[0] < rep.chosen.scalar < DEFAULT_GRID[-1]
