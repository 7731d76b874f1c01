"""Stationary Matern covariance functions and the separable space-time composite.

The surrogate model works on points ``(x, t)`` where ``x`` is a spatial
location in normalized search-region coordinates and ``t`` is a frame index.
Covariance between two such points factorizes into a purely spatial kernel
evaluated on the Euclidean distance ``||x - x'||`` and a purely temporal
kernel evaluated on the lag ``|t - t'|``:

    K((x, t), (x', t')) = K_S(x, x') * K_T(t, t')

Both factors are Matern kernels; smoothness defaults to nu = 5/2.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np


class MaternFamily(Enum):
    MATERN12 = "matern12"
    MATERN32 = "matern32"
    MATERN52 = "matern52"


_SQRT3 = math.sqrt(3.0)
_SQRT5 = math.sqrt(5.0)


@dataclass(frozen=True)
class KernelSpec:
    """One stationary Matern kernel: family, signal variance, lengthscale.

    ``variance`` is the value of k(x, x) (score units squared); ``lengthscale``
    is in the units of the input axis the kernel acts on (normalized region
    coordinates for the spatial factor, frames for the temporal factor).
    """

    family: MaternFamily = MaternFamily.MATERN52
    variance: float = 1.0
    lengthscale: float = 1.0

    def __post_init__(self) -> None:
        if not (math.isfinite(self.variance) and self.variance > 0):
            raise ValueError(f"kernel variance must be positive, got {self.variance}")
        if not (math.isfinite(self.lengthscale) and self.lengthscale > 0):
            raise ValueError(f"kernel lengthscale must be positive, got {self.lengthscale}")


@dataclass(frozen=True)
class SpatioTemporalKernel:
    """Separable product kernel K_S(x, x') * K_T(t, t')."""

    spatial: KernelSpec = KernelSpec()
    temporal: KernelSpec = KernelSpec()

    @property
    def prior_variance(self) -> float:
        """Value at zero lag: variance_S * variance_T."""
        return self.spatial.variance * self.temporal.variance


def _matern(spec: KernelSpec, s):
    """Matern value at pre-scaled distance s = r / lengthscale; no validation."""
    if spec.family is MaternFamily.MATERN12:
        return spec.variance * np.exp(-s)
    if spec.family is MaternFamily.MATERN32:
        return spec.variance * (1.0 + _SQRT3 * s) * np.exp(-_SQRT3 * s)
    return spec.variance * (1.0 + _SQRT5 * s + (5.0 / 3.0) * s * s) * np.exp(-_SQRT5 * s)


def kernel_eval(spec: KernelSpec, r):
    """Evaluate a Matern kernel at distance(s) ``r`` >= 0.

    Accepts a scalar or ndarray; returns the same shape. Closed forms for
    nu in {1/2, 3/2, 5/2}:

        1/2: v * exp(-r/l)
        3/2: v * (1 + sqrt(3) r/l) * exp(-sqrt(3) r/l)
        5/2: v * (1 + sqrt(5) r/l + 5 r^2 / (3 l^2)) * exp(-sqrt(5) r/l)
    """
    arr = np.asarray(r, dtype=float)
    if not np.all(np.isfinite(arr)):
        raise ValueError("kernel distance must be finite")
    if np.any(arr < 0):
        raise ValueError("kernel distance must be nonnegative")
    out = _matern(spec, arr / spec.lengthscale)
    return float(out) if np.isscalar(r) or arr.ndim == 0 else out


def st_kernel_eval(kernel: SpatioTemporalKernel, p1, p2) -> float:
    """Covariance between two space-time points ``(location, time)``.

    Locations must share dimensionality (2-D, optionally 3-D with a scale
    axis); times are scalars. The result is exactly the product of the two
    factor kernels.
    """
    (x1, t1), (x2, t2) = p1, p2
    a = np.asarray(x1, dtype=float)
    b = np.asarray(x2, dtype=float)
    if a.shape != b.shape:
        raise ValueError(f"location dimensionality mismatch: {a.shape} vs {b.shape}")
    if not (np.isfinite(t1) and np.isfinite(t2)):
        raise ValueError("times must be finite")
    r_s = float(np.linalg.norm(a - b))
    r_t = abs(float(t1) - float(t2))
    return kernel_eval(kernel.spatial, r_s) * kernel_eval(kernel.temporal, r_t)


def gram_matrix(kernel: SpatioTemporalKernel, locations: np.ndarray, times: np.ndarray) -> np.ndarray:
    """Dense n x n covariance matrix over a sample set, vectorized."""
    return cross_covariance(kernel, locations, times, locations, times)


def cross_covariance(
    kernel: SpatioTemporalKernel,
    loc_a: np.ndarray,
    t_a: np.ndarray,
    loc_b: np.ndarray,
    t_b: np.ndarray,
) -> np.ndarray:
    """Covariance block between two point sets, shape (len(a), len(b))."""
    a = np.atleast_2d(np.asarray(loc_a, dtype=float))
    b = np.atleast_2d(np.asarray(loc_b, dtype=float))
    if a.shape[1] != b.shape[1]:
        raise ValueError(f"location dimensionality mismatch: {a.shape[1]} vs {b.shape[1]}")
    diff = a[:, None, :] - b[None, :, :]
    r_s = np.sqrt(np.maximum(np.einsum("ijk,ijk->ij", diff, diff), 0.0))
    r_t = np.abs(np.asarray(t_a, dtype=float)[:, None] - np.asarray(t_b, dtype=float)[None, :])
    return _matern(kernel.spatial, r_s / kernel.spatial.lengthscale) * _matern(
        kernel.temporal, r_t / kernel.temporal.lengthscale
    )


def point_covariance(
    kernel: SpatioTemporalKernel,
    loc: np.ndarray,
    time: float,
    locs: np.ndarray,
    times: np.ndarray,
) -> np.ndarray:
    """Covariance of one point against many; the loop-friendly fast path."""
    d = locs - loc
    r_s = np.sqrt(np.einsum("ij,ij->i", d, d))
    r_t = np.abs(times - time)
    return _matern(kernel.spatial, r_s / kernel.spatial.lengthscale) * _matern(
        kernel.temporal, r_t / kernel.temporal.lengthscale
    )
