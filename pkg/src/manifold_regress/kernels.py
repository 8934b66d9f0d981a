"""Kernels, bandwidths and local weights."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence, Union

import numpy as np

from .errors import DimensionMismatch, EmptyNeighborhood

WEIGHT_UNDERFLOW = 1e-300


@dataclass(frozen=True)
class Bandwidth:
    """Diagonal bandwidth matrix H = diag(h_1, ..., h_m)."""

    h: tuple

    def __post_init__(self):
        h = tuple(float(v) for v in np.atleast_1d(self.h))
        if not h or not all(np.isfinite(v) and v > 0 for v in h):
            raise ValueError(f"bandwidths must be positive and finite, got {h}")
        object.__setattr__(self, "h", h)

    @classmethod
    def isotropic(cls, h: float, m: int) -> "Bandwidth":
        return cls((float(h),) * m)

    @classmethod
    def coerce(cls, value: Union["Bandwidth", float, Sequence[float]], m: int) -> "Bandwidth":
        """Accept a Bandwidth, a scalar (replicated m times) or a length-m sequence."""
        if isinstance(value, Bandwidth):
            bw = value
        elif np.ndim(value) == 0:
            bw = cls.isotropic(float(value), m)
        else:
            bw = cls(tuple(value))
        if bw.m != m:
            raise DimensionMismatch(f"bandwidth has {bw.m} entries, covariates have {m}")
        return bw

    @property
    def m(self) -> int:
        return len(self.h)

    @property
    def array(self) -> np.ndarray:
        return np.asarray(self.h)

    @property
    def det(self) -> float:
        return float(np.prod(self.h))

    @property
    def scalar(self) -> Optional[float]:
        """The common value when isotropic, else None."""
        return self.h[0] if len(set(self.h)) == 1 else None

    def __str__(self):
        s = self.scalar
        return repr(s) if s is not None else ";".join(repr(v) for v in self.h)


@dataclass(frozen=True)
class KernelSpec:
    """Either a product of standard Gaussians, or the mixed binary/continuous kernel.

    The mixed kernel gives zero weight unless the covariate at ``binary_index``
    matches exactly; each remaining coordinate contributes
    ``exp(-(u_j)^2 / h_j) / h_j^2``. The bandwidth entry of the binary
    coordinate is ignored.
    """

    kind: str = "gaussian"
    binary_index: Optional[int] = None

    def __post_init__(self):
        if self.kind not in ("gaussian", "mixed"):
            raise ValueError(f"unknown kernel kind {self.kind!r}")
        if self.kind == "mixed" and (self.binary_index is None or self.binary_index < 0):
            raise ValueError("mixed kernel needs a non-negative binary_index")


GAUSSIAN = KernelSpec("gaussian")


def kernel_weights(kernel: KernelSpec, bandwidth: Bandwidth, query, covariates) -> np.ndarray:
    """K_H(x_i - x) for every covariate row x_i.

    Returns an unnormalized weight vector of length n. An all-zero result is
    legal here; ``normalize_weights`` decides what to do with it.
    """
    x = np.asarray(covariates, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    q = np.atleast_1d(np.asarray(query, dtype=float))
    m = x.shape[1]
    if q.shape != (m,) or bandwidth.m != m:
        raise DimensionMismatch(
            f"query has shape {q.shape}, bandwidth {bandwidth.m} entries, covariates {m} columns"
        )
    h = bandwidth.array
    u = (x - q) / h
    if kernel.kind == "gaussian":
        return np.exp(-0.5 * np.einsum("ij,ij->i", u, u)) / ((2 * np.pi) ** (m / 2) * bandwidth.det)

    b = kernel.binary_index
    if b >= m:
        raise DimensionMismatch(f"binary_index {b} out of range for {m} covariates")
    cont = [j for j in range(m) if j != b]
    diff = x[:, cont] - q[cont]
    hc = h[cont]
    w = np.exp(-np.sum(diff**2 / hc, axis=1)) / np.prod(hc**2)
    return np.where(x[:, b] == q[b], w, 0.0)


def normalize_weights(weights) -> np.ndarray:
    w = np.asarray(weights, dtype=float)
    if np.any(w < 0):
        raise ValueError("weights must be nonnegative")
    total = w.sum()
    if not total >= WEIGHT_UNDERFLOW:
        raise EmptyNeighborhood(f"kernel weights sum to {total:.3g}; query is outside the kernel support")
    return w / total
