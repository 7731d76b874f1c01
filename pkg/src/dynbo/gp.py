"""Gaussian process regression over spatio-temporal samples.

Zero-mean GP with a separable space-time kernel and homoskedastic observation
noise. Fitting factorizes (Gram + noise*I) with a Cholesky decomposition;
prediction and the log marginal likelihood reuse the factor. Observed values
may be shifted by a configured midpoint before fitting (and shifted back on
prediction) so that scores whose natural range is not centered at zero still
match the zero prior mean.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Iterable, Sequence

import numpy as np
from scipy.linalg import cho_solve, solve_triangular

from .kernels import SpatioTemporalKernel, cross_covariance, gram_matrix

# Jitter escalation for near-singular Gram matrices: start here, double until
# the cap, then give up.
_JITTER_START = 1e-8
_JITTER_MAX = 1e-4

_LOG_2PI = math.log(2.0 * math.pi)


class GpFitError(Exception):
    """Gram + noise*I could not be factorized; advise increasing noise/jitter."""


@dataclass(frozen=True)
class Sample:
    """One observed query of the objective.

    ``location`` is in normalized search-region coordinates in [0, 1]^2,
    ``time`` is the frame index, ``scale`` the multiplicative box scale the
    observation was taken at, and ``value`` the observed similarity score.
    """

    location: tuple[float, float]
    time: int
    scale: float = 1.0
    value: float = 0.0

    def __post_init__(self) -> None:
        if not all(math.isfinite(c) for c in self.location):
            raise ValueError("sample location must be finite")
        if not math.isfinite(self.value):
            raise ValueError("sample value must be finite")


@dataclass
class GpModel:
    """Fitted surrogate: sample window, kernel, noise, Cholesky factor.

    ``chol`` is the lower-triangular factor L with L L^T = Gram + noise*I and
    ``alpha`` solves (Gram + noise*I) alpha = (values - mean_shift).
    Instances are immutable by convention after ``gp_fit``; ``gp_extend``
    returns a new model.
    """

    samples: tuple[Sample, ...]
    kernel: SpatioTemporalKernel
    noise: float
    mean_shift: float
    chol: np.ndarray
    alpha: np.ndarray
    locations: np.ndarray = field(repr=False)
    times: np.ndarray = field(repr=False)
    values: np.ndarray = field(repr=False)  # shifted values

    @property
    def n(self) -> int:
        return len(self.samples)


def _sample_arrays(samples: Sequence[Sample]) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    locs = np.array([s.location for s in samples], dtype=float)
    times = np.array([s.time for s in samples], dtype=float)
    vals = np.array([s.value for s in samples], dtype=float)
    return locs, times, vals


def _factorize(gram: np.ndarray, noise: float) -> tuple[np.ndarray, float]:
    """Cholesky of gram + noise*I, escalating jitter on failure."""
    n = gram.shape[0]
    eff = noise
    while True:
        try:
            chol = np.linalg.cholesky(gram + eff * np.eye(n))
            return chol, eff
        except np.linalg.LinAlgError:
            if eff >= _JITTER_MAX:
                raise GpFitError(
                    "Gram + noise*I is not numerically positive definite even at "
                    f"jitter {eff:g}; increase the observation noise"
                ) from None
            eff = max(eff * 2.0, _JITTER_START)


def gp_fit(
    samples: Iterable[Sample],
    kernel: SpatioTemporalKernel,
    noise: float = 1e-4,
    mean_shift: float = 0.0,
) -> GpModel:
    """Fit the GP to a sample window. Deterministic given inputs.

    ``noise`` is the observation noise variance (>= 0). When the Gram matrix
    is numerically singular the noise is escalated in doublings up to 1e-4
    before failing with :class:`GpFitError`.
    """
    samples = tuple(samples)
    if not samples:
        raise ValueError("gp_fit requires at least one sample")
    if noise < 0:
        raise ValueError("observation noise must be nonnegative")
    locs, times, vals = _sample_arrays(samples)
    gram = gram_matrix(kernel, locs, times)
    chol, eff_noise = _factorize(gram, noise)
    shifted = vals - mean_shift
    alpha = cho_solve((chol, True), shifted, check_finite=False)
    return GpModel(
        samples=samples,
        kernel=kernel,
        noise=eff_noise,
        mean_shift=mean_shift,
        chol=chol,
        alpha=alpha,
        locations=locs,
        times=times,
        values=shifted,
    )


def _query_arrays(queries) -> tuple[np.ndarray, np.ndarray]:
    if isinstance(queries, tuple) and len(queries) == 2 and isinstance(queries[0], np.ndarray):
        locs, times = queries
        return np.asarray(locs, dtype=float), np.asarray(times, dtype=float)
    locs = np.array([q[0] for q in queries], dtype=float)
    times = np.array([q[1] for q in queries], dtype=float)
    return locs, times


def gp_predict(model: GpModel, queries) -> tuple[np.ndarray, np.ndarray]:
    """Posterior mean and variance at query points.

    ``queries`` is a list of ``((x, y), t)`` pairs, or a pre-built
    ``(locations, times)`` array pair. Returns ``(means, variances)`` with
    variances clamped to >= 0.
    """
    locs, times = _query_arrays(queries)
    if not (np.all(np.isfinite(locs)) and np.all(np.isfinite(times))):
        raise ValueError("query points must be finite")
    k_star = cross_covariance(model.kernel, locs, times, model.locations, model.times)
    means = k_star @ model.alpha + model.mean_shift
    v = solve_triangular(model.chol, k_star.T, lower=True, check_finite=False)
    variances = model.kernel.prior_variance - np.einsum("ij,ij->j", v, v)
    return means, np.maximum(variances, 0.0)


def gp_extend(model: GpModel, new_samples: Iterable[Sample]) -> GpModel:
    """Append samples to a fitted model, updating the Cholesky factor in place
    of a full refit.

    The block-append recurrence reproduces the factor of the extended matrix
    exactly (up to roundoff); when the appended block is numerically
    indefinite the function falls back to a full refit with jitter escalation.
    """
    new_samples = tuple(new_samples)
    if not new_samples:
        return model
    locs_n, times_n, vals_n = _sample_arrays(new_samples)
    b = cross_covariance(model.kernel, model.locations, model.times, locs_n, times_n)
    c = gram_matrix(model.kernel, locs_n, times_n) + model.noise * np.eye(len(new_samples))
    x = solve_triangular(model.chol, b, lower=True, check_finite=False)
    schur = c - x.T @ x
    try:
        l_s = np.linalg.cholesky(schur)
    except np.linalg.LinAlgError:
        return gp_fit(model.samples + new_samples, model.kernel, model.noise, model.mean_shift)
    n, k = model.n, len(new_samples)
    chol = np.zeros((n + k, n + k))
    chol[:n, :n] = model.chol
    chol[n:, :n] = x.T
    chol[n:, n:] = l_s
    values = np.concatenate([model.values, vals_n - model.mean_shift])
    alpha = cho_solve((chol, True), values, check_finite=False)
    return GpModel(
        samples=model.samples + new_samples,
        kernel=model.kernel,
        noise=model.noise,
        mean_shift=model.mean_shift,
        chol=chol,
        alpha=alpha,
        locations=np.vstack([model.locations, locs_n]),
        times=np.concatenate([model.times, times_n]),
        values=values,
    )


def log_marginal_likelihood(model: GpModel) -> float:
    """Gaussian log evidence of the (shifted) sample values under the prior."""
    fit = -0.5 * float(model.values @ model.alpha)
    logdet = float(np.sum(np.log(np.diag(model.chol))))
    return fit - logdet - 0.5 * model.n * _LOG_2PI


def fit_hyperparams(
    samples: Sequence[Sample],
    kernel: SpatioTemporalKernel,
    spatial_lengthscales: Sequence[float],
    temporal_lengthscales: Sequence[float],
    noise: float = 1e-4,
    mean_shift: float = 0.0,
) -> tuple[float, float]:
    """Select spatial and temporal lengthscales by marginal likelihood.

    Searches the cross product of the two candidate lists with both variances
    held at their configured values, honoring the independent treatment of the
    two factors. Ties and the initial incumbent resolve to the earliest grid
    point in iteration order (spatial-major).
    """
    samples = tuple(samples)
    if len(samples) < 5:
        raise ValueError("hyperparameter fitting requires at least 5 samples")
    if len({s.time for s in samples}) < 2:
        raise ValueError("hyperparameter fitting requires samples from at least 2 distinct times")
    if not spatial_lengthscales or not temporal_lengthscales:
        raise ValueError("lengthscale grids must be non-empty")
    best = None
    best_lml = -math.inf
    for ls in spatial_lengthscales:
        for lt in temporal_lengthscales:
            trial = SpatioTemporalKernel(
                spatial=replace(kernel.spatial, lengthscale=ls),
                temporal=replace(kernel.temporal, lengthscale=lt),
            )
            lml = log_marginal_likelihood(gp_fit(samples, trial, noise, mean_shift))
            if lml > best_lml:
                best_lml = lml
                best = (float(ls), float(lt))
    assert best is not None
    return best
