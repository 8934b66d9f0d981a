"""Random generators: von Mises-Fisher draws and the simulation models.

Every generator takes an explicit ``numpy.random.Generator`` or a seed and
never touches global random state.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from datetime import date, timedelta
from typing import Optional

import numpy as np
from scipy.linalg import null_space
from scipy.special import ive

from .errors import InvalidPoint, NonConvergence
from .manifolds import Grassmann, PlanarShape, Sphere, polar_factor, shape_from_landmarks
from .regression import Dataset


def _rng(seed_or_rng) -> np.random.Generator:
    if isinstance(seed_or_rng, np.random.Generator):
        return seed_or_rng
    return np.random.default_rng(seed_or_rng)


# --------------------------------------------------------------------------
# vMF on S^2
# --------------------------------------------------------------------------


def _householder_to(mu: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Apply, row by row, the reflection that sends e_3 to mu[i] to v[i]."""
    e3 = np.array([0.0, 0.0, 1.0])
    h = e3 - mu
    hh = np.einsum("ij,ij->i", h, h)
    coef = np.divide(2.0 * np.einsum("ij,ij->i", h, v), hh, out=np.zeros(len(v)), where=hh > 1e-24)
    return v - coef[:, None] * h


def sample_vmf(mu, kappa: float, rng, size: Optional[int] = None) -> np.ndarray:
    """Draw from the von Mises-Fisher distribution on S^2.

    The cosine of the angle to ``mu`` is drawn by inverting its CDF,
    ``w = 1 + log(u + (1 - u) exp(-2 kappa)) / kappa``, the azimuth
    uniformly, and the draw is then carried from the north pole to ``mu``.
    ``mu`` may also be an (n, 3) array of mean directions, one draw per row.

    Returns shape (3,) for a single mean and no ``size``, else (n, 3).
    """
    if kappa < 0:
        raise ValueError("kappa must be nonnegative")
    rng = _rng(rng)
    mu = np.asarray(mu, dtype=float)
    single = mu.ndim == 1 and size is None
    mus = np.atleast_2d(mu)
    if mus.shape[1] != 3:
        raise ValueError("this sampler is for S^2 (3-vectors)")
    if size is not None:
        if mus.shape[0] != 1:
            raise ValueError("size only applies to a single mean direction")
        mus = np.repeat(mus, size, axis=0)
    mus = mus / np.linalg.norm(mus, axis=1, keepdims=True)
    n = mus.shape[0]
    u = rng.random(n)
    phi = rng.uniform(0.0, 2 * np.pi, n)
    if kappa == 0:
        w = 2.0 * u - 1.0
    else:
        w = 1.0 + np.log(u + (1.0 - u) * np.exp(-2.0 * kappa)) / kappa
    w = np.clip(w, -1.0, 1.0)
    r = np.sqrt((1.0 - w) * (1.0 + w))
    local = np.column_stack([r * np.cos(phi), r * np.sin(phi), w])
    out = _householder_to(mus, local)
    out /= np.linalg.norm(out, axis=1, keepdims=True)
    return out[0] if single else out


def vmf_mean_angle(kappa: float, rng, draws: int = 200_000) -> float:
    """Monte-Carlo estimate of E[angle to the mean direction] for vMF(kappa) on S^2."""
    y = sample_vmf(np.array([0.0, 0.0, 1.0]), kappa, rng, size=draws)
    return float(np.mean(np.arccos(np.clip(y[:, 2], -1, 1))))


# --------------------------------------------------------------------------
# vMF on S^(p-1), any p (Wood's algorithm)
# --------------------------------------------------------------------------


def _vmf_vector(h: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """One draw with density proportional to exp(h^T y) on the unit sphere of R^p."""
    p = h.size
    kappa = float(np.linalg.norm(h))
    if p == 1:
        x = float(h[0])
        # P(+1) = e^x / (e^x + e^-x)
        return np.array([1.0 if rng.random() < 0.5 * (1 + np.tanh(x)) else -1.0])
    if kappa == 0:
        g = rng.standard_normal(p)
        return g / np.linalg.norm(g)
    mu = h / kappa
    d = p - 1
    b = d / (2 * kappa + np.sqrt(4 * kappa**2 + d**2))
    x0 = (1 - b) / (1 + b)
    c = kappa * x0 + d * np.log(1 - x0**2)
    while True:
        z = rng.beta(d / 2, d / 2)
        w = (1 - (1 + b) * z) / (1 - (1 - b) * z)
        if kappa * w + d * np.log(1 - x0 * w) - c >= np.log(rng.random()):
            break
    v = rng.standard_normal(p)
    v -= (v @ mu) * mu
    v /= np.linalg.norm(v)
    return w * mu + np.sqrt(max(0.0, (1 - w) * (1 + w))) * v


# --------------------------------------------------------------------------
# matrix vMF on the Stiefel manifold
# --------------------------------------------------------------------------


@dataclass
class SamplerStats:
    """Proposal / acceptance counters for the rejection samplers."""

    proposals: int = 0
    accepted: int = 0

    @property
    def acceptance_rate(self) -> float:
        return self.accepted / self.proposals if self.proposals else float("nan")


def uniform_stiefel(m: int, k: int, rng) -> np.ndarray:
    """Haar-uniform m x k orthonormal frame (sign-corrected QR of a Gaussian matrix)."""
    rng = _rng(rng)
    q, r = np.linalg.qr(rng.standard_normal((m, k)))
    return q * np.sign(np.diag(r))


def _matrix_vmf_uniform(f, rng, stats, max_proposals):
    bound = np.linalg.svd(f, compute_uv=False).sum()
    m, k = f.shape
    for _ in range(max_proposals):
        stats.proposals += 1
        y = uniform_stiefel(m, k, rng)
        if np.log(rng.random()) < np.trace(f.T @ y) - bound:
            stats.accepted += 1
            return y
    raise NonConvergence(f"uniform-proposal matrix vMF sampler accepted nothing in {max_proposals} proposals")


def _matrix_vmf_columnwise(f, rng, stats, max_proposals):
    m, k = f.shape
    u_m, d, vt = np.linalg.svd(f, full_matrices=False)
    h = u_m * d
    for _ in range(max_proposals):
        stats.proposals += 1
        u = np.zeros((m, k))
        u[:, 0] = _vmf_vector(h[:, 0], rng)
        log_ratio = 0.0
        for j in range(1, k):
            basis = null_space(u[:, :j].T)
            hn = basis.T @ h[:, j]
            u[:, j] = basis @ _vmf_vector(hn, rng)
            if d[j] > 0:
                xn = float(np.linalg.norm(hn))
                xd = float(np.linalg.norm(h[:, j]))
                nu = 0.5 * (m - j - 2)
                log_ratio += (
                    np.log(ive(nu, xn)) - np.log(ive(nu, xd)) + (xn - xd) + nu * (np.log(xd) - np.log(xn))
                )
        if np.log(rng.random()) < log_ratio:
            stats.accepted += 1
            return u @ vt
    raise NonConvergence(f"column-wise matrix vMF sampler accepted nothing in {max_proposals} proposals")


def sample_matrix_vmf(
    mean,
    kappa: float,
    rng,
    *,
    method: str = "columnwise",
    stats: Optional[SamplerStats] = None,
    max_proposals: int = 100_000,
) -> np.ndarray:
    """Draw an m x k orthonormal frame with density proportional to exp(kappa tr(M^T Y)).

    ``method="columnwise"`` proposes the columns one at a time from vector vMF
    distributions restricted to the orthogonal complement of the previous
    columns and corrects with an exact rejection step (Hoff 2009); it stays
    efficient when ``kappa * M`` is large. ``method="uniform"`` proposes
    Haar-uniform frames and accepts with probability
    ``exp(kappa (tr(M^T Y) - sum_j sigma_j(M)))``; only practical for small
    ``kappa * ||M||``. Pass a SamplerStats to collect acceptance counts.
    """
    rng = _rng(rng)
    m_arr = np.asarray(mean, dtype=float)
    if m_arr.ndim == 1:
        m_arr = m_arr[:, None]
    s = np.linalg.svd(m_arr, compute_uv=False)
    if s[-1] <= 1e-12 * s[0] or s[0] == 0:
        raise InvalidPoint("matrix vMF mean must have full column rank")
    if kappa < 0:
        raise ValueError("kappa must be nonnegative")
    stats = stats if stats is not None else SamplerStats()
    f = kappa * m_arr
    if method == "uniform":
        return _matrix_vmf_uniform(f, rng, stats, max_proposals)
    if method == "columnwise":
        return _matrix_vmf_columnwise(f, rng, stats, max_proposals)
    raise ValueError(f"unknown method {method!r}")


# --------------------------------------------------------------------------
# simulation models
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class SphereSimConfig:
    """Sphere regression model.

    ``beta ~ N_3(0, I)``, ``x^1, x^2 ~ N(0, 1)``, ``x^3 = x^1 x^2``,
    ``mu_i = (beta o x_i) / |beta o x_i|`` and ``y_i ~ vMF(mu_i, kappa)``.
    ``beta`` can be pinned to reuse one regression function across datasets.
    """

    n: int
    kappa: float
    seed: int = 0
    beta: Optional[tuple] = None

    def __post_init__(self):
        if self.n < 1 or not self.kappa > 0:
            raise ValueError("need n >= 1 and kappa > 0")


@dataclass
class SphereSim:
    data: Dataset
    means: np.ndarray
    beta: np.ndarray


def sphere_mean_function(beta, x) -> np.ndarray:
    bx = np.atleast_2d(x) * np.asarray(beta)
    return bx / np.linalg.norm(bx, axis=1, keepdims=True)


def sample_sphere_covariates(n: int, rng) -> np.ndarray:
    x12 = rng.standard_normal((n, 2))
    return np.column_stack([x12, x12[:, 0] * x12[:, 1]])


def simulate_sphere_regression(config: SphereSimConfig) -> SphereSim:
    rng = np.random.default_rng(config.seed)
    beta = rng.standard_normal(3)
    if config.beta is not None:
        beta = np.asarray(config.beta, dtype=float)
    x = sample_sphere_covariates(config.n, rng)
    while True:
        bad = np.flatnonzero(np.linalg.norm(x * beta, axis=1) == 0)
        if bad.size == 0:
            break
        x[bad] = sample_sphere_covariates(bad.size, rng)
    mu = sphere_mean_function(beta, x)
    y = sample_vmf(mu, config.kappa, rng)
    return SphereSim(Dataset(x, tuple(y), Sphere(2)), mu, beta)


@dataclass(frozen=True)
class GrassmannSimConfig:
    """Mixed-dimension subspace process indexed by t = 1..n1+n2.

    For each t an m x 5 standard normal X is drawn and the mean columns are
    ``t + X1, t - X2, t^2 + X3, t X4`` plus ``t + t X5`` once ``t > n1``;
    the response is the span of a matrix vMF draw with parameter ``kappa M``.
    """

    n1: int = 50
    n2: int = 50
    kappa: float = 1.0
    m: int = 10
    seed: int = 0

    def __post_init__(self):
        if self.n1 + self.n2 < 1 or self.n1 < 0 or self.n2 < 0:
            raise ValueError("need n1, n2 >= 0 and n1 + n2 >= 1")
        if self.m < 5:
            raise ValueError("ambient dimension m must be >= 5")
        if not self.kappa > 0:
            raise ValueError("kappa must be positive")

    @property
    def n(self) -> int:
        return self.n1 + self.n2


@dataclass
class GrassmannSim:
    data: Dataset
    dims: np.ndarray
    stats: SamplerStats = field(default_factory=SamplerStats)


def grassmann_process_mean(t: int, x: np.ndarray, n1: int) -> np.ndarray:
    cols = [t + x[:, 0], t - x[:, 1], t**2 + x[:, 2], t * x[:, 3]]
    if t > n1:
        cols.append(t + t * x[:, 4])
    return np.column_stack(cols)


def simulate_grassmann_process(config: GrassmannSimConfig) -> GrassmannSim:
    rng = np.random.default_rng(config.seed)
    stats = SamplerStats()
    ts, ys = [], []
    for t in range(1, config.n + 1):
        x = rng.standard_normal((config.m, 5))
        mean = grassmann_process_mean(t, x, config.n1)
        ys.append(sample_matrix_vmf(mean, config.kappa, rng, stats=stats))
        ts.append(float(t))
    dims = np.array([y.shape[1] for y in ys])
    data = Dataset(np.array(ts)[:, None], tuple(ys), Grassmann(config.m))
    return GrassmannSim(data, dims, stats)


# --------------------------------------------------------------------------
# look-alike fixtures for the external datasets
# --------------------------------------------------------------------------


def _template_outline(k: int) -> np.ndarray:
    """A thin arched outline, loosely shaped like a mid-sagittal corpus callosum."""
    s = np.linspace(0, 2 * np.pi, k, endpoint=False)
    x = 2.0 * np.cos(s)
    y = 0.6 * np.sin(s) + 0.5 * (1 - (x / 2.0) ** 2)
    return np.column_stack([x, y])


def simulate_landmark_records(n: int = 120, k: int = 50, seed: int = 0, noise: float = 0.02):
    """Synthetic (id, diag, age, landmarks) rows; shape thins with age, faster when diag = 1."""
    rng = np.random.default_rng(seed)
    base = _template_outline(k)
    records = []
    for i in range(n):
        diag = int(rng.random() < 0.4)
        age = float(np.round(rng.uniform(7, 21), 2))
        thin = 1.0 - 0.015 * (age - 7) * (1 + 0.8 * diag)
        shape = base * np.array([1.0, thin]) + noise * rng.standard_normal((k, 2))
        theta = rng.uniform(-0.3, 0.3)
        rot = np.array([[np.cos(theta), -np.sin(theta)], [np.sin(theta), np.cos(theta)]])
        lm = rng.uniform(50, 80) * shape @ rot.T + rng.uniform(-20, 20, 2)
        records.append((f"s{i:04d}", diag, age, lm))
    return records


def simulate_prices(
    n_weeks: int = 30,
    n_assets: int = 5,
    seed: int = 0,
    start: date = date(2009, 1, 5),
    missing_day_prob: float = 0.03,
):
    """Daily closes on weekdays with a slowly rotating factor structure and occasional gaps.

    Returns ``(dates, values)`` with values of shape (days, n_assets).
    """
    rng = np.random.default_rng(seed)
    dates, rows = [], []
    level = np.full(n_assets, 100.0)
    day = start - timedelta(days=start.weekday())
    for w in range(n_weeks):
        angle = 2 * np.pi * w / max(n_weeks, 1)
        loading = np.cos(angle + np.arange(n_assets))
        for d in range(5):
            if rng.random() < missing_day_prob:
                continue
            shock = loading * rng.standard_normal() + 0.3 * rng.standard_normal(n_assets)
            level = level * np.exp(0.01 * shock)
            dates.append(day + timedelta(days=7 * w + d))
            rows.append(level.copy())
    return dates, np.array(rows)


def landmark_dataset(records) -> Dataset:
    """PlanarShape dataset with covariates (diag, age) from (id, diag, age, landmarks) tuples."""
    ids, cov, shapes = [], [], []
    for rid, diag, age, lm in records:
        ids.append(rid)
        cov.append((float(diag), float(age)))
        shapes.append(shape_from_landmarks(lm))
    k = shapes[0].size
    return Dataset(np.array(cov), tuple(shapes), PlanarShape(k), tuple(ids))
