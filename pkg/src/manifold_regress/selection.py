"""Bandwidth selection by K-fold cross-validation, and residual metrics."""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .errors import DimensionMismatch, EmptyNeighborhood, NumericalError
from .kernels import Bandwidth
from .manifolds import Manifold
from .regression import Dataset, FitConfig, predict

# 0.1, 0.2, ..., 2.0
DEFAULT_GRID = tuple(round(0.1 * i, 1) for i in range(1, 21))
METRICS = ("intrinsic", "extrinsic")


@dataclass(frozen=True)
class CvPlan:
    bandwidth_grid: tuple = DEFAULT_GRID
    folds: int = 10
    metric: str = "intrinsic"
    seed: int = 0

    def __post_init__(self):
        if self.folds < 2:
            raise ValueError("need at least 2 folds")
        if len(self.bandwidth_grid) == 0:
            raise ValueError("bandwidth grid is empty")
        if self.metric not in METRICS:
            raise ValueError(f"metric must be one of {METRICS}")
        object.__setattr__(self, "bandwidth_grid", tuple(self.bandwidth_grid))


@dataclass
class CvReport:
    bandwidths: list
    mean_scores: np.ndarray
    fold_scores: np.ndarray  # (n_bandwidths, folds)
    chosen_index: int

    @property
    def chosen(self) -> Bandwidth:
        return self.bandwidths[self.chosen_index]

    @property
    def chosen_score(self) -> float:
        return float(self.mean_scores[self.chosen_index])


def fold_assignment(n: int, folds: int, seed: int) -> list[np.ndarray]:
    """Seeded shuffle of ``range(n)`` cut into ``folds`` contiguous blocks."""
    if not 2 <= folds <= n:
        raise ValueError(f"need 2 <= folds <= n, got folds={folds}, n={n}")
    perm = np.random.default_rng(seed).permutation(n)
    return np.array_split(perm, folds)


def squared_residual(manifold: Manifold, metric: str, pred, truth) -> float:
    if metric == "intrinsic":
        return manifold.distance(pred, truth) ** 2
    return float(np.sum((manifold.embed(pred) - manifold.embed(truth)) ** 2))


def _fold_score(train: Dataset, test: Dataset, config: FitConfig, metric: str) -> float:
    total = 0.0
    for x, y in zip(test.covariates, test.responses):
        try:
            p = predict(train, config, x)
        except NumericalError:
            # empty neighborhoods (or an undefined estimate) disqualify the bandwidth
            return np.inf
        total += squared_residual(train.manifold, metric, p.point, y)
    return total / test.n


def cross_validate(data: Dataset, config: FitConfig, plan: CvPlan, workers: int = 1) -> CvReport:
    """Score every bandwidth in the grid by K-fold CV and pick the best.

    Scalar grid entries are expanded to isotropic bandwidths. Ties (within
    1e-9 relative / 1e-12 absolute) go to the smaller bandwidth, ordered by
    the product of its entries.
    """
    bws = [Bandwidth.coerce(b, data.m) for b in plan.bandwidth_grid]
    folds = fold_assignment(data.n, plan.folds, plan.seed)
    splits = []
    for idx in folds:
        mask = np.zeros(data.n, dtype=bool)
        mask[idx] = True
        splits.append((data.subset(~mask), data.subset(mask)))

    cells = [(b, f) for b in range(len(bws)) for f in range(len(splits))]

    def run(cell):
        b, f = cell
        train, test = splits[f]
        return _fold_score(train, test, config.with_bandwidth(bws[b]), plan.metric)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            flat = list(pool.map(run, cells))
    else:
        flat = [run(c) for c in cells]
    scores = np.array(flat, dtype=float).reshape(len(bws), len(splits))
    means = scores.mean(axis=1)
    if not np.any(np.isfinite(means)):
        raise EmptyNeighborhood("every bandwidth in the grid left some held-out point with no neighbors")
    best = np.min(means)
    tied = np.flatnonzero(np.isclose(means, best, rtol=1e-9, atol=1e-12))
    chosen = int(min(tied, key=lambda i: (bws[i].det, i)))
    return CvReport(bws, means, scores, chosen)


def mean_squared_distance(predictions: Sequence, targets: Sequence, manifold: Manifold) -> float:
    if len(predictions) != len(targets):
        raise DimensionMismatch(f"{len(predictions)} predictions but {len(targets)} targets")
    if len(predictions) == 0:
        return float("nan")
    return float(np.mean([manifold.distance(p, t) ** 2 for p, t in zip(predictions, targets)]))


def mse_metrics(predictions, truths, manifold: Manifold, realized: Optional[Sequence] = None) -> dict:
    """Squared intrinsic distance averaged against the noiseless means (``mse``)
    and against realized responses (``predictive_mse``, NaN when not given)."""
    out = {"mse": mean_squared_distance(predictions, truths, manifold) if truths is not None else float("nan")}
    out["predictive_mse"] = (
        mean_squared_distance(predictions, realized, manifold) if realized is not None else float("nan")
    )
    return out
