"""Extrinsic local regression estimators and the intrinsic sphere baseline.

All extrinsic estimators follow the same two steps: form a local estimate
of the conditional mean (or median) of the embedded responses in the
ambient space, then project it back onto the embedded manifold.
"""

from __future__ import annotations

import itertools
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from functools import cached_property
from typing import Optional, Sequence, Union

import numpy as np

from .errors import (
    AntipodalIterate,
    DimensionMismatch,
    ManifoldRegressError,
    NonConvergence,
    ProjectionError,
    RankDeficientDesign,
)
from .kernels import GAUSSIAN, Bandwidth, KernelSpec, kernel_weights, normalize_weights
from .manifolds import Grassmann, Manifold, Sphere, estimate_subspace_dim

ESTIMATORS = ("mean", "median", "intrinsic")
LSTSQ_RCOND = 1e-10
WEISZFELD_TOL = 1e-10
WEISZFELD_MAX_ITER = 10_000
VERTEX_CHECK_EVERY = 16
OBJECTIVE_RTOL = 64 * np.finfo(float).eps  # rounding slack when comparing median objectives
COINCIDE_TOL = 1e-12
ANTIPODAL_TOL = 1e-8


@dataclass(frozen=True, eq=False)
class Dataset:
    """Covariates ``x_i`` (n x m) paired with manifold-valued responses ``y_i``."""

    covariates: np.ndarray
    responses: tuple
    manifold: Manifold
    ids: Optional[tuple] = field(default=None, repr=False)

    def __post_init__(self):
        x = np.asarray(self.covariates, dtype=float)
        if x.ndim == 1:
            x = x[:, None]
        if x.ndim != 2 or x.shape[0] < 1:
            raise DimensionMismatch("covariates must be an (n, m) array with n >= 1")
        if not np.all(np.isfinite(x)):
            raise DimensionMismatch("covariates must be finite")
        if len(self.responses) != x.shape[0]:
            raise DimensionMismatch(f"{x.shape[0]} covariate rows but {len(self.responses)} responses")
        x.setflags(write=False)
        object.__setattr__(self, "covariates", x)
        object.__setattr__(self, "responses", tuple(self.manifold.validate(y) for y in self.responses))
        if self.ids is not None:
            object.__setattr__(self, "ids", tuple(self.ids))

    @property
    def n(self) -> int:
        return self.covariates.shape[0]

    @property
    def m(self) -> int:
        return self.covariates.shape[1]

    @cached_property
    def embedded(self) -> np.ndarray:
        """Embedded responses stacked as an (n, D) array."""
        z = np.stack([self.manifold.embed(y) for y in self.responses])
        z.setflags(write=False)
        return z

    def subset(self, index) -> "Dataset":
        index = np.asarray(index)
        if index.dtype == bool:
            index = np.flatnonzero(index)
        sub = Dataset(
            self.covariates[index],
            tuple(self.responses[i] for i in index),
            self.manifold,
            None if self.ids is None else tuple(self.ids[i] for i in index),
        )
        if "embedded" in self.__dict__:
            sub.__dict__["embedded"] = self.embedded[index]
        return sub


@dataclass(frozen=True)
class IntrinsicConfig:
    """Settings for the intrinsic sphere baseline.

    ``solver="descent"`` is fixed-step gradient descent (``step_size``,
    ``threshold``). ``solver="karcher"`` is the full-step Karcher mean
    iteration with backtracking, run to ``karcher_tol``; it reaches the same
    minimizer in far fewer steps and is meant for bandwidth search.
    """

    step_size: float = 0.01
    threshold: float = 0.001
    max_iters: int = 100_000
    solver: str = "descent"
    karcher_tol: float = 1e-6

    def __post_init__(self):
        if not (self.step_size > 0 and self.threshold > 0 and self.max_iters >= 1):
            raise ValueError("step_size and threshold must be positive, max_iters >= 1")
        if self.solver not in ("descent", "karcher"):
            raise ValueError("solver must be 'descent' or 'karcher'")


@dataclass(frozen=True)
class FitConfig:
    """Estimator settings.

    ``bandwidth`` may be a scalar (isotropic) or a Bandwidth. ``estimator`` is
    one of ``"mean"`` (kernel / local polynomial), ``"median"`` (Weiszfeld,
    degree 0 only) or ``"intrinsic"`` (sphere gradient descent, degree 0 only).
    """

    bandwidth: Union[Bandwidth, float] = 1.0
    kernel: KernelSpec = GAUSSIAN
    degree: int = 0
    estimator: str = "mean"
    intrinsic: IntrinsicConfig = IntrinsicConfig()

    def __post_init__(self):
        if self.estimator not in ESTIMATORS:
            raise ValueError(f"estimator must be one of {ESTIMATORS}, got {self.estimator!r}")
        if int(self.degree) != self.degree or self.degree < 0:
            raise ValueError("degree must be a nonnegative integer")
        if self.estimator != "mean" and self.degree != 0:
            raise ValueError(f"{self.estimator} estimator only supports degree 0")

    def bandwidth_for(self, m: int) -> Bandwidth:
        return Bandwidth.coerce(self.bandwidth, m)

    def with_bandwidth(self, bandwidth) -> "FitConfig":
        return replace(self, bandwidth=bandwidth)


@dataclass(frozen=True)
class Prediction:
    point: np.ndarray
    ambient: np.ndarray
    effective_n: float
    k_hat: Optional[int] = None
    iterations: Optional[int] = None


def _local_weights(data: Dataset, config: FitConfig, query) -> tuple[np.ndarray, np.ndarray]:
    raw = kernel_weights(config.kernel, config.bandwidth_for(data.m), query, data.covariates)
    return raw, normalize_weights(raw)


def _finish(data: Dataset, ambient: np.ndarray, raw: np.ndarray, iterations=None) -> Prediction:
    point = data.manifold.project(ambient)
    k_hat = point.shape[1] if isinstance(data.manifold, Grassmann) else None
    return Prediction(point, ambient, float(raw.sum()), k_hat, iterations)


def extrinsic_kernel_predict(data: Dataset, config: FitConfig, query) -> Prediction:
    """Kernel-weighted average of the embedded responses, projected back."""
    if config.estimator != "mean" or config.degree != 0:
        raise ValueError("extrinsic_kernel_predict needs a degree-0 mean config")
    raw, w = _local_weights(data, config, query)
    return _finish(data, w @ data.embedded, raw)


def multi_indices(m: int, degree: int) -> list[tuple[int, ...]]:
    """Exponent vectors k with |k| <= degree in graded lexicographic order.

    >>> multi_indices(2, 2)
    [(0, 0), (1, 0), (0, 1), (2, 0), (1, 1), (0, 2)]
    """
    out = []
    for total in range(degree + 1):
        for combo in itertools.combinations_with_replacement(range(m), total):
            k = [0] * m
            for j in combo:
                k[j] += 1
            out.append(tuple(k))
    return out


def local_polynomial_fit(data: Dataset, config: FitConfig, query) -> tuple[np.ndarray, np.ndarray]:
    """Weighted least squares coefficients of the local polynomial, all D coordinates at once.

    Returns ``(coef, raw_weights)`` where ``coef`` has one row per multi-index
    (``multi_indices`` order) and one column per ambient coordinate. Design
    columns use covariate offsets scaled by the bandwidth, which leaves the
    intercept row unchanged.
    """
    raw, w = _local_weights(data, config, query)
    bw = config.bandwidth_for(data.m)
    keep = w > 0
    u = (data.covariates[keep] - np.asarray(query, dtype=float)) / bw.array
    powers = np.array(multi_indices(data.m, config.degree))
    design = np.prod(u[:, None, :] ** powers[None, :, :], axis=2)
    sw = np.sqrt(w[keep])[:, None]
    coef, _, rank, _ = np.linalg.lstsq(design * sw, data.embedded[keep] * sw, rcond=LSTSQ_RCOND)
    if rank < powers.shape[0]:
        raise RankDeficientDesign(
            f"local design of degree {config.degree} has rank {rank} < {powers.shape[0]}; "
            "too few distinct neighbors"
        )
    return coef, raw


def local_polynomial_predict(data: Dataset, config: FitConfig, query) -> Prediction:
    coef, raw = local_polynomial_fit(data, config, query)
    return _finish(data, coef[0], raw)


# --------------------------------------------------------------------------
# Weiszfeld
# --------------------------------------------------------------------------


@dataclass
class MedianResult:
    median: np.ndarray
    iterations: int
    objective: list


def _median_objective(y, points, w):
    return float(w @ np.linalg.norm(points - y, axis=1))


def _vertex_is_optimal(j: int, points, w) -> bool:
    d = np.linalg.norm(points - points[j], axis=1)
    near = d < COINCIDE_TOL
    far = ~near
    r = np.linalg.norm((w[far] / d[far]) @ (points[far] - points[j]))
    return r <= w[near].sum()


def weighted_geometric_median(
    points,
    weights,
    *,
    tol: float = WEISZFELD_TOL,
    max_iter: int = WEISZFELD_MAX_ITER,
    start=None,
) -> MedianResult:
    """Minimize ``sum_i w_i ||y - z_i||`` over y by Weiszfeld iteration.

    Uses the Vardi-Zhang modification when the iterate coincides with data
    points: if the subgradient condition holds there the iterate is optimal,
    otherwise it steps off along the residual direction. Stops when a step
    moves the iterate less than ``tol`` times the data spread, or when the
    nearest data point passes the optimality test (checked every few
    iterations).
    """
    z = np.asarray(points, dtype=float)
    w = normalize_weights(weights)
    keep = w > 0
    z, w = z[keep], w[keep]
    y = w @ z if start is None else np.asarray(start, dtype=float)
    obj = _median_objective(y, z, w)
    scale = max(float(np.ptp(z, axis=0).max()), np.finfo(float).tiny)
    history = [obj]
    for it in range(1, max_iter + 1):
        d = np.linalg.norm(z - y, axis=1)
        near = d < COINCIDE_TOL
        far = ~near
        if not far.any():
            break
        wd = w[far] / d[far]
        resid = wd @ (z[far] - y)
        r = float(np.linalg.norm(resid))
        eta = float(w[near].sum())
        if eta > 0 and r <= eta:
            break
        if it % VERTEX_CHECK_EVERY == 0:
            # convergence toward an optimal data point is sublinear; test it directly
            j = int(np.argmin(d))
            if _vertex_is_optimal(j, z, w):
                y = z[j].copy()
                history.append(_median_objective(y, z, w))
                break
        t = y + resid / wd.sum()
        y_new = t if eta == 0 else (1 - eta / r) * t + (eta / r) * y
        new_obj = _median_objective(y_new, z, w)
        if new_obj > obj * (1 + OBJECTIVE_RTOL):
            # the exact map never ascends; a real rise means the iterate is stuck in rounding
            break
        history.append(new_obj)
        # the objective is flat at the optimum; stop on the step, not on the objective change
        y, done = y_new, np.linalg.norm(y_new - y) <= tol * scale
        obj = new_obj
        if done:
            break
    else:
        raise NonConvergence(f"Weiszfeld iteration did not converge in {max_iter} steps")
    # snap to a data point when that point is provably the minimizer
    j = int(np.argmin(np.linalg.norm(z - y, axis=1)))
    if not np.array_equal(z[j], y) and _vertex_is_optimal(j, z, w):
        y = z[j].copy()
        history.append(_median_objective(y, z, w))
    return MedianResult(y, len(history) - 1, history)


def extrinsic_median_predict(data: Dataset, config: FitConfig, query) -> Prediction:
    raw, w = _local_weights(data, config, query)
    res = weighted_geometric_median(data.embedded, w)
    return _finish(data, res.median, raw, res.iterations)


# --------------------------------------------------------------------------
# intrinsic baseline
# --------------------------------------------------------------------------


@dataclass
class DescentResult:
    point: np.ndarray
    iterations: int
    objective: list
    grad_norms: list


def _weighted_log_sum(y, points, w):
    """sum_i w_i log_y(y_i) and the distances d(y, y_i)."""
    c = points @ y
    r = points - c[:, None] * y
    # |y_i - c_i y| keeps its accuracy at small angles, unlike sqrt(1 - c^2)
    s = np.sqrt(np.einsum("ij,ij->i", r, r))
    if s.min() < ANTIPODAL_TOL and np.any((s < ANTIPODAL_TOL) & (c < 0)):
        raise AntipodalIterate("gradient descent iterate is antipodal to a response")
    theta = np.arctan2(s, c)
    # log_y(y_i) = theta_i / s_i * r_i; theta/s -> 1 as s -> 0
    s_safe = np.where(s > 0, s, 1.0)
    factor = w * np.where(s > 0, theta / s_safe, 1.0)
    return factor @ r, theta


def sphere_weighted_descent(points, weights, start, config: IntrinsicConfig = IntrinsicConfig(), *, trace=False):
    """Gradient descent for ``f(y) = sum_i w_i d(y, y_i)^2`` on the sphere.

    Weights are normalized first (the minimizer does not depend on their
    scale). The Riemannian gradient is ``-2 sum_i w_i log_y(y_i)``; each step
    moves along the geodesic ``exp_y(-step_size * grad)`` until the gradient
    norm falls below ``threshold``.
    """
    y_pts = np.asarray(points, dtype=float)
    w = normalize_weights(weights)
    keep = w > 0
    y_pts, w = y_pts[keep], w[keep]
    y = np.asarray(start, dtype=float)
    objective, grad_norms = [], []
    delta, eps = config.step_size, config.threshold
    for it in range(config.max_iters + 1):
        logsum, theta = _weighted_log_sum(y, y_pts, w)
        grad = -2.0 * logsum
        gn = float(np.linalg.norm(grad))
        if trace:
            objective.append(float(w @ theta**2))
            grad_norms.append(gn)
        if gn < eps:
            return DescentResult(y, it, objective, grad_norms)
        if it == config.max_iters:
            break
        step = -delta * grad
        ns = np.linalg.norm(step)
        y = np.cos(ns) * y + (np.sin(ns) / ns) * step
        y /= np.linalg.norm(y)
    raise NonConvergence(f"intrinsic descent did not reach |grad| < {eps} in {config.max_iters} steps")


def sphere_karcher_mean(points, weights, start, config: IntrinsicConfig = IntrinsicConfig()):
    """Minimize ``sum_i w_i d(y, y_i)^2`` by ``y <- exp_y(t v)``, ``v = sum_i w_i log_y(y_i)``.

    Weights are normalized so ``t = 1`` is the Karcher step; ``t`` is halved
    until the objective decreases. Stops when ``|2 v| < karcher_tol`` or no
    representable step decreases the objective.
    """
    y_pts = np.asarray(points, dtype=float)
    w = normalize_weights(weights)
    keep = w > 0
    y_pts, w = y_pts[keep], w[keep]
    y = np.asarray(start, dtype=float)
    v, theta = _weighted_log_sum(y, y_pts, w)
    f = float(w @ theta**2)
    objective, grad_norms = [f], [2.0 * float(np.linalg.norm(v))]
    for it in range(config.max_iters):
        nv = math.sqrt(v @ v)
        if 2.0 * nv < config.karcher_tol:
            return DescentResult(y, it, objective, grad_norms)
        t = 1.0
        while True:
            step = t * nv
            cand = np.cos(step) * y + (np.sin(step) / nv) * v
            cand /= np.linalg.norm(cand)
            try:
                v_new, theta = _weighted_log_sum(cand, y_pts, w)
            except AntipodalIterate:
                v_new = None
            if v_new is not None and float(w @ theta**2) < f:
                break
            t *= 0.5
            if t * nv < 1e-15:
                # the objective no longer resolves the step: y is optimal to rounding
                return DescentResult(y, it, objective, grad_norms)
        y, v, f = cand, v_new, float(w @ theta**2)
        objective.append(f)
        grad_norms.append(2.0 * float(np.linalg.norm(v)))
    raise NonConvergence(f"Karcher iteration did not converge in {config.max_iters} steps")


def intrinsic_sphere_predict(data: Dataset, config: FitConfig, query, start=None) -> Prediction:
    """Intrinsic kernel regression on the sphere by gradient descent.

    Starts from the extrinsic estimate unless ``start`` is given; when the
    extrinsic mean cannot be projected the most heavily weighted response is
    used instead.
    """
    if not isinstance(data.manifold, Sphere):
        raise TypeError("intrinsic_sphere_predict requires sphere-valued responses")
    raw, w = _local_weights(data, config, query)
    if start is None:
        ambient = w @ data.embedded
        try:
            start = data.manifold.project(ambient)
        except ProjectionError:
            start = data.responses[int(np.argmax(w))]
    solve = sphere_karcher_mean if config.intrinsic.solver == "karcher" else sphere_weighted_descent
    res = solve(data.embedded, w, start, config.intrinsic)
    return Prediction(res.point, res.point.copy(), float(raw.sum()), None, res.iterations)


def predict(data: Dataset, config: FitConfig, query) -> Prediction:
    if config.estimator == "median":
        return extrinsic_median_predict(data, config, query)
    if config.estimator == "intrinsic":
        return intrinsic_sphere_predict(data, config, query)
    if config.degree == 0:
        return extrinsic_kernel_predict(data, config, query)
    return local_polynomial_predict(data, config, query)


def _predict_or_error(data, config, query):
    try:
        return predict(data, config, query)
    except ManifoldRegressError as exc:
        return exc


def predict_batch(
    data: Dataset, config: FitConfig, queries: Sequence, workers: int = 1
) -> list[Union[Prediction, ManifoldRegressError]]:
    """Predict at many queries; a failed query yields its exception in place."""
    queries = list(queries)
    if workers > 1 and len(queries) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(lambda q: _predict_or_error(data, config, q), queries))
    return [_predict_or_error(data, config, q) for q in queries]


def grassmann_dim_estimate(ambient) -> int:
    """Estimated subspace dimension of an averaged projection matrix (flattened m x m)."""
    a = np.asarray(ambient, dtype=float)
    m = int(round(np.sqrt(a.size)))
    if m * m != a.size:
        raise DimensionMismatch("ambient vector is not a flattened square matrix")
    return estimate_subspace_dim(a.reshape(m, m))
