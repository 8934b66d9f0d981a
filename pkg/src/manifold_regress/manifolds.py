"""Embedded manifolds: sphere, Kendall planar shape, Stiefel and Grassmann.

Every manifold maps points into a flat real ambient vector (``embed``) and
back onto the embedded image by nearest-point projection (``project``).
Points are plain numpy arrays:

=============  ==========================  ==========================
manifold       point                       ambient vector (length D)
=============  ==========================  ==========================
Sphere(d)      unit vector, shape (d+1,)   the point itself, D = d+1
PlanarShape(k) complex preshape, (k,)      uu*, interleaved re/im, D = 2k^2
Stiefel(k, m)  orthonormal frame, (m, k)   row-major flattening, D = mk
Grassmann(m)   orthonormal basis, (m, k)   XX^T row-major, D = m^2
=============  ==========================  ==========================

Complex Hermitian matrices are stored row-major with each entry written as
a (real, imaginary) pair, i.e. ``A.view(float).ravel()``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import AntipodalPoints, DimensionMismatch, InvalidPoint, ProjectionError

SPHERE_NORM_TOL = 1e-12
SHAPE_TOL = 1e-12
FRAME_TOL = 1e-10
# relative eigenvalue gap below which a spectral projection is ambiguous
EIG_TIE_TOL = 1e-9
# sigma_min / sigma_max below which a Stiefel projection is not unique
RANK_TOL = 1e-10
ZERO_TOL = 1e-12


class Manifold:
    """Interface shared by the concrete manifolds."""

    name: str = "manifold"

    @property
    def ambient_dim(self) -> int:
        raise NotImplementedError

    def validate(self, point) -> np.ndarray:
        """Return ``point`` as an array, raising InvalidPoint if it is off the manifold."""
        raise NotImplementedError

    def embed(self, point) -> np.ndarray:
        raise NotImplementedError

    def project(self, ambient) -> np.ndarray:
        raise NotImplementedError

    def distance(self, a, b) -> float:
        raise NotImplementedError

    def equal(self, a, b, tol: float = 1e-10) -> bool:
        a = self.validate(a)
        b = self.validate(b)
        return bool(np.linalg.norm(self.embed(a) - self.embed(b)) <= tol)

    # serialization -------------------------------------------------------
    def to_row(self, point) -> np.ndarray:
        return np.asarray(self.embed(point), dtype=float)

    def from_row(self, values) -> np.ndarray:
        return self.project(np.asarray(values, dtype=float))

    @property
    def row_width(self) -> int:
        return self.ambient_dim

    def _check_ambient(self, ambient) -> np.ndarray:
        ambient = np.asarray(ambient, dtype=float).ravel()
        if ambient.size != self.ambient_dim:
            raise DimensionMismatch(
                f"{self!r} expects ambient vectors of length {self.ambient_dim}, got {ambient.size}"
            )
        if not np.all(np.isfinite(ambient)):
            raise InvalidPoint("ambient vector has non-finite entries")
        return ambient


# --------------------------------------------------------------------------
# Sphere
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class Sphere(Manifold):
    """The unit sphere S^d in R^(d+1) with the inclusion embedding."""

    d: int = 2
    name = "sphere"

    def __post_init__(self):
        if self.d < 1:
            raise ValueError("sphere dimension must be >= 1")

    @property
    def ambient_dim(self) -> int:
        return self.d + 1

    def validate(self, point) -> np.ndarray:
        p = np.asarray(point, dtype=float)
        if p.shape != (self.d + 1,):
            raise DimensionMismatch(f"expected shape ({self.d + 1},), got {p.shape}")
        if not np.all(np.isfinite(p)) or abs(np.linalg.norm(p) - 1.0) > SPHERE_NORM_TOL:
            raise InvalidPoint("sphere point must have unit norm")
        return p

    def embed(self, point) -> np.ndarray:
        return self.validate(point).copy()

    def project(self, ambient) -> np.ndarray:
        v = self._check_ambient(ambient)
        nrm = np.linalg.norm(v)
        if nrm < ZERO_TOL:
            raise ProjectionError("cannot project the zero vector onto the sphere")
        return v / nrm

    def distance(self, a, b) -> float:
        a = self.validate(a)
        b = self.validate(b)
        return great_circle(a, b)

    def from_row(self, values) -> np.ndarray:
        # stored values are already unit vectors up to print precision
        return self.project(values)


def great_circle(a: np.ndarray, b: np.ndarray) -> float:
    """Great-circle distance between unit vectors.

    Mathematically ``arccos(clip(a.b, -1, 1))``; evaluated through ``arctan2``
    so that small angles keep full relative precision.
    """
    c = float(np.dot(a, b))
    s = float(np.linalg.norm(b - c * a))
    return float(np.arctan2(s, np.clip(c, -1.0, 1.0)))


def sphere_log(base, target) -> np.ndarray:
    """Riemannian log map on the unit sphere.

    Returns the tangent vector at ``base`` pointing along the minimizing
    geodesic to ``target`` with length equal to their great-circle distance.
    """
    base = np.asarray(base, dtype=float)
    target = np.asarray(target, dtype=float)
    if base.shape != target.shape:
        raise DimensionMismatch("base and target differ in shape")
    c = float(np.dot(base, target))
    v = target - c * base
    s = float(np.linalg.norm(v))
    if s < ZERO_TOL:
        if c < 0:
            raise AntipodalPoints("log map undefined for antipodal points")
        return np.zeros_like(base)
    theta = np.arctan2(s, c)
    return (theta / s) * v


def sphere_exp(base, tangent, tol: float = 1e-8) -> np.ndarray:
    base = np.asarray(base, dtype=float)
    tangent = np.asarray(tangent, dtype=float)
    if base.shape != tangent.shape:
        raise DimensionMismatch("base and tangent differ in shape")
    if abs(float(np.dot(base, tangent))) > tol:
        raise InvalidPoint("tangent vector is not orthogonal to the base point")
    nt = float(np.linalg.norm(tangent))
    if nt == 0.0:
        return base.copy()
    out = np.cos(nt) * base + (np.sin(nt) / nt) * tangent
    return out / np.linalg.norm(out)


# --------------------------------------------------------------------------
# Kendall planar shape space
# --------------------------------------------------------------------------


def _helmert(k: int) -> np.ndarray:
    """Orthonormal basis for the complement of the all-ones vector, shape (k-1, k)."""
    h = np.zeros((k - 1, k))
    for j in range(1, k):
        h[j - 1, :j] = -1.0 / np.sqrt(j * (j + 1))
        h[j - 1, j] = j / np.sqrt(j * (j + 1))
    return h


def canonical_phase(u: np.ndarray) -> np.ndarray:
    """Rotate a complex vector so its first non-negligible entry is real positive."""
    u = np.asarray(u, dtype=complex)
    mags = np.abs(u)
    idx = int(np.argmax(mags > 1e-10 * mags.max()))
    out = u * (np.conj(u[idx]) / mags[idx])
    out[idx] = mags[idx]
    return out


def _as_complex_landmarks(landmarks) -> np.ndarray:
    z = np.asarray(landmarks)
    if np.iscomplexobj(z):
        return z.ravel().astype(complex)
    z = z.astype(float)
    if z.ndim == 2 and z.shape[1] == 2:
        return z[:, 0] + 1j * z[:, 1]
    if z.ndim == 1 and z.size % 2 == 0:
        return z[0::2] + 1j * z[1::2]
    raise DimensionMismatch("landmarks must be complex (k,) or real (k, 2)")


def shape_from_landmarks(landmarks) -> np.ndarray:
    """Centered, unit-norm, phase-canonical preshape of k planar landmarks.

    ``landmarks`` is either a complex vector of length k or a real (k, 2) array.
    """
    z = _as_complex_landmarks(landmarks)
    if z.size < 3:
        raise InvalidPoint("a planar shape needs at least 3 landmarks")
    if not np.all(np.isfinite(z)):
        raise InvalidPoint("landmarks contain non-finite coordinates")
    c = z - z.mean()
    nrm = np.linalg.norm(c)
    if nrm <= SHAPE_TOL * max(1.0, np.abs(z).max()):
        raise InvalidPoint("degenerate landmark configuration (all landmarks coincide)")
    u = c / nrm
    # second pass removes the rounding left by a large common offset
    u = u - u.mean()
    return canonical_phase(u / np.linalg.norm(u))


def shape_to_landmarks(preshape, scale: float = 1.0) -> np.ndarray:
    u = np.asarray(preshape, dtype=complex) * scale
    return np.column_stack([u.real, u.imag])


@dataclass(frozen=True)
class PlanarShape(Manifold):
    """Kendall shape space of k planar landmarks with the Veronese-Whitney embedding."""

    k: int = 3
    name = "shape"

    def __post_init__(self):
        if self.k < 3:
            raise ValueError("planar shapes need k >= 3 landmarks")

    @property
    def ambient_dim(self) -> int:
        return 2 * self.k * self.k

    def validate(self, point) -> np.ndarray:
        u = np.asarray(point)
        if u.shape != (self.k,):
            raise DimensionMismatch(f"expected preshape of length {self.k}, got shape {u.shape}")
        u = u.astype(complex)
        if abs(u.sum()) > SHAPE_TOL or abs(np.linalg.norm(u) - 1.0) > SHAPE_TOL:
            raise InvalidPoint("preshape must be centered with unit norm")
        return u

    def embed(self, point) -> np.ndarray:
        u = self.validate(point)
        return np.outer(u, u.conj()).view(float).ravel()

    def hermitian(self, ambient) -> np.ndarray:
        """Unflatten an ambient vector into a k x k complex matrix."""
        v = self._check_ambient(ambient)
        return v.view(complex).reshape(self.k, self.k)

    def project(self, ambient) -> np.ndarray:
        a = self.hermitian(ambient)
        a = 0.5 * (a + a.conj().T)
        # restrict to centered configurations so the answer lies on the image
        h = _helmert(self.k)
        w, v = np.linalg.eigh(h @ a @ h.T)
        top, second = w[-1], w[-2] if w.size > 1 else -np.inf
        scale = max(abs(w).max(), np.finfo(float).tiny)
        if top - second < EIG_TIE_TOL * scale:
            raise ProjectionError("largest eigenvalue is not simple; shape projection is not unique")
        u = h.T @ v[:, -1]
        u = u - u.mean()
        return canonical_phase(u / np.linalg.norm(u))

    def distance(self, a, b) -> float:
        a = self.validate(a)
        b = self.validate(b)
        # arccos|<a, b>| via arctan2 after aligning the phase of b to a
        z = np.vdot(a, b)
        c = abs(z)
        b_al = b * (np.conj(z) / c) if c > 0 else b
        s = float(np.linalg.norm(b_al - c * a))
        return float(np.arctan2(s, min(c, 1.0)))

    def to_row(self, point) -> np.ndarray:
        u = canonical_phase(self.validate(point))
        return u.view(float).copy()

    def from_row(self, values) -> np.ndarray:
        v = np.asarray(values, dtype=float)
        if v.size != 2 * self.k:
            raise DimensionMismatch(f"expected {2 * self.k} values, got {v.size}")
        u = v.view(complex)
        return canonical_phase(self.validate(u))

    @property
    def row_width(self) -> int:
        return 2 * self.k


# --------------------------------------------------------------------------
# Stiefel
# --------------------------------------------------------------------------


def _check_frame(x, m: int, k: Optional[int]) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.ndim == 1 and k in (None, 1):
        x = x.reshape(-1, 1)
    if x.ndim != 2 or x.shape[0] != m or (k is not None and x.shape[1] != k):
        want = f"({m}, {k})" if k is not None else f"({m}, k)"
        raise DimensionMismatch(f"expected frame of shape {want}, got {x.shape}")
    if x.shape[1] < 1 or x.shape[1] > m:
        raise DimensionMismatch("frame must have 1 <= k <= m columns")
    if not np.all(np.isfinite(x)):
        raise InvalidPoint("frame has non-finite entries")
    if np.abs(x.T @ x - np.eye(x.shape[1])).max() > FRAME_TOL:
        raise InvalidPoint("frame columns are not orthonormal")
    return x


def polar_factor(a: np.ndarray) -> np.ndarray:
    """Orthonormal factor U of the polar decomposition ``a = U (a^T a)^(1/2)``."""
    w, s, vt = np.linalg.svd(a, full_matrices=False)
    if s[-1] < RANK_TOL * s[0] or s[0] == 0.0:
        raise ProjectionError("matrix is rank deficient; polar projection is not unique")
    return w @ vt


@dataclass(frozen=True)
class Stiefel(Manifold):
    """Orthonormal k-frames in R^m, embedded by inclusion into R^(m x k)."""

    k: int
    m: int
    name = "stiefel"

    def __post_init__(self):
        if not 1 <= self.k <= self.m:
            raise ValueError("Stiefel manifold needs 1 <= k <= m")

    @property
    def ambient_dim(self) -> int:
        return self.k * self.m

    def validate(self, point) -> np.ndarray:
        return _check_frame(point, self.m, self.k)

    def embed(self, point) -> np.ndarray:
        return self.validate(point).ravel().copy()

    def project(self, ambient) -> np.ndarray:
        a = self._check_ambient(ambient).reshape(self.m, self.k)
        return polar_factor(a)

    def distance(self, a, b) -> float:
        return float(np.linalg.norm(self.validate(a) - self.validate(b)))


# --------------------------------------------------------------------------
# Grassmann
# --------------------------------------------------------------------------


def _round_half_away(x: float) -> int:
    return int(np.floor(abs(x) + 0.5) * np.sign(x))


def _top_gap_ok(w_desc: np.ndarray, k: int) -> bool:
    if k >= w_desc.size:
        return True
    scale = max(abs(w_desc).max(), np.finfo(float).tiny)
    return w_desc[k - 1] - w_desc[k] >= EIG_TIE_TOL * scale


def estimate_subspace_dim(sym: np.ndarray) -> int:
    """Subspace dimension implied by a (weighted average of) projection matrices.

    The trace of every projection matrix equals its rank, so the trace of an
    average is the average rank. The trace is rounded half away from zero; if
    the spectrum has no clear cut at that position the number of eigenvalues
    >= 1/2 is used instead.
    """
    s = np.asarray(sym, dtype=float)
    m = s.shape[0]
    s = 0.5 * (s + s.T)
    k = _round_half_away(float(np.trace(s)))
    w = np.linalg.eigvalsh(s)[::-1]
    if not (1 <= k <= m) or not _top_gap_ok(w, k):
        k = int(np.sum(w >= 0.5))
    if not 1 <= k <= m:
        raise ProjectionError(f"estimated subspace dimension {k} outside [1, {m}]")
    return k


@dataclass(frozen=True)
class Grassmann(Manifold):
    """k-dimensional subspaces of R^m with the projection-matrix (Conway) embedding.

    ``k=None`` admits subspaces of any dimension; the distance between two
    points is then the Frobenius distance of their projection matrices, which
    is defined across dimensions.
    """

    m: int
    k: Optional[int] = None
    name = "grassmann"

    def __post_init__(self):
        if self.m < 1 or (self.k is not None and not 1 <= self.k <= self.m):
            raise ValueError("Grassmann manifold needs 1 <= k <= m")

    @property
    def ambient_dim(self) -> int:
        return self.m * self.m

    def validate(self, point) -> np.ndarray:
        return _check_frame(point, self.m, self.k)

    def projector(self, point) -> np.ndarray:
        x = self.validate(point)
        return x @ x.T

    def embed(self, point) -> np.ndarray:
        return self.projector(point).ravel()

    def project(self, ambient, k: Optional[int] = None) -> np.ndarray:
        """Span of the top-k eigenvectors of the symmetrized ambient matrix.

        ``k`` defaults to the manifold's fixed dimension, or is estimated from
        the trace when the manifold has mixed dimension.
        """
        s = self._check_ambient(ambient).reshape(self.m, self.m)
        s = 0.5 * (s + s.T)
        if k is None:
            k = self.k if self.k is not None else estimate_subspace_dim(s)
        if not 1 <= k <= self.m:
            raise DimensionMismatch(f"subspace dimension {k} outside [1, {self.m}]")
        w, v = np.linalg.eigh(s)
        w, v = w[::-1], v[:, ::-1]
        if not _top_gap_ok(w, k):
            raise ProjectionError(f"eigenvalue tie at position {k}; subspace projection is not unique")
        return v[:, :k].copy()

    def distance(self, a, b) -> float:
        return float(np.linalg.norm(self.projector(a) - self.projector(b)))

    def from_row(self, values) -> np.ndarray:
        return self.project(values)


# --------------------------------------------------------------------------
# functional interface
# --------------------------------------------------------------------------


def embed(manifold: Manifold, point) -> np.ndarray:
    return manifold.embed(point)


def project(manifold: Manifold, ambient, **kwargs) -> np.ndarray:
    return manifold.project(ambient, **kwargs)


def intrinsic_distance(manifold: Manifold, a, b) -> float:
    return manifold.distance(a, b)


def manifold_from_dict(spec: dict) -> Manifold:
    """Build a manifold from ``{"kind": ..., <params>}`` as stored in configs and file headers."""
    spec = dict(spec)
    kind = spec.pop("kind")
    classes = {"sphere": Sphere, "shape": PlanarShape, "stiefel": Stiefel, "grassmann": Grassmann}
    if kind not in classes:
        raise ValueError(f"unknown manifold kind {kind!r}")
    return classes[kind](**{key: (None if val in (None, "None") else int(val)) for key, val in spec.items()})


def manifold_to_dict(manifold: Manifold) -> dict:
    out = {"kind": manifold.name}
    out.update({f: getattr(manifold, f) for f in manifold.__dataclass_fields__})
    return out
