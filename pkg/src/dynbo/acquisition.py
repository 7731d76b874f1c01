"""Acquisition functions over a discrete candidate grid.

Three acquisition kinds are supported: classical expected improvement (EI)
and probability of improvement (PI) with a fixed exploration margin, and the
memory-score variant (MS-EI) whose margin cools as the per-frame search
accumulates samples:

    xi = 1 / (alpha * mean(observed values) * n^q)

so that early iterations (small n) explore and later ones exploit. The
per-frame sample history resets at each new frame; cross-frame memory lives
in the surrogate's temporal kernel, not here.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np
from scipy.special import erfc

_SQRT2 = math.sqrt(2.0)
_INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)

# Mean observed score at or below this is treated as a degenerate window.
_MEAN_EPS = 1e-6


class AcqKind(Enum):
    EI = "ei"
    PI = "pi"
    MSEI = "msei"


@dataclass(frozen=True)
class AcqConfig:
    """Acquisition selection and its tuning knobs.

    ``alpha`` and ``q`` parameterize the MS-EI cooling schedule; ``fixed_xi``
    is the constant margin used by plain EI/PI. ``xi_max`` caps the MS-EI
    margin when the observed-score mean degenerates to ~0 (documented
    deviation from the bare reciprocal, which would blow up). ``score_offset``
    is added to posterior means before computing improvements so that the
    incumbent and the means live on the same shifted scale; the shift cancels
    inside mu - f* and leaves EI/PI values unchanged.
    """

    kind: AcqKind = AcqKind.MSEI
    alpha: float = 1.0
    q: float = 1.1
    fixed_xi: float = 0.01
    xi_max: float | None = None  # None: 10x the oracle's score range
    score_offset: float = 0.0

    def __post_init__(self) -> None:
        if self.alpha <= 0:
            raise ValueError("acquisition alpha must be positive")
        if self.q <= 0:
            raise ValueError("acquisition q must be positive")
        if self.fixed_xi < 0:
            raise ValueError("fixed_xi must be nonnegative")

    @property
    def xi_cap(self) -> float:
        # Fallback covers direct library use against [-1, 1]-range scores.
        return self.xi_max if self.xi_max is not None else 20.0


@dataclass
class SearchHistory:
    """Observations made in the current frame's search.

    ``values`` are the observed scores (already on the acquisition scale,
    i.e. shifted by the caller's score offset), ``locations`` the queried
    grid locations. The incumbent is the best observed value and where it
    was seen; ``n`` is the iteration count.
    """

    locations: list[tuple[float, float]] = field(default_factory=list)
    values: list[float] = field(default_factory=list)
    _best_index: int = -1

    @property
    def n(self) -> int:
        return len(self.values)

    @property
    def incumbent_value(self) -> float:
        if self._best_index < 0:
            raise ValueError("empty history has no incumbent")
        return self.values[self._best_index]

    @property
    def incumbent_location(self) -> tuple[float, float]:
        if self._best_index < 0:
            raise ValueError("empty history has no incumbent")
        return self.locations[self._best_index]

    def record(self, location: tuple[float, float], value: float) -> None:
        self.locations.append((float(location[0]), float(location[1])))
        self.values.append(float(value))
        if self._best_index < 0 or value > self.values[self._best_index]:
            self._best_index = len(self.values) - 1


def _norm_pdf(z: float) -> float:
    return _INV_SQRT_2PI * math.exp(-0.5 * z * z)


def _norm_cdf(z: float) -> float:
    return 0.5 * math.erfc(-z / _SQRT2)


def ms_ei_xi(history: SearchHistory, cfg: AcqConfig) -> float:
    """Memory-score exploration margin: 1 / (alpha * mean(values) * n^q).

    Requires at least one observation. A mean at or below 1e-6 (degenerate
    all-zero window) clamps the result to ``cfg.xi_max`` instead of letting
    the reciprocal blow up.
    """
    if history.n < 1:
        raise ValueError("ms_ei_xi requires at least one observation")
    mean = sum(history.values) / history.n
    if mean <= _MEAN_EPS:
        return cfg.xi_cap
    return min(1.0 / (cfg.alpha * mean * history.n**cfg.q), cfg.xi_cap)


def expected_improvement(mean: float, sd: float, incumbent: float, xi: float) -> float:
    """EI against the incumbent with exploration margin xi; always >= 0.

    For sd > 0 this is (mu - f* - xi) CDF(Z) + sd PDF(Z) with
    Z = (mu - f* - xi) / sd; at sd == 0 it degenerates to max(mu - f* - xi, 0).
    """
    if not all(map(math.isfinite, (mean, sd, incumbent, xi))):
        raise ValueError("expected_improvement requires finite inputs")
    if sd < 0:
        raise ValueError("standard deviation must be nonnegative")
    improve = mean - incumbent - xi
    if sd == 0.0:
        return max(improve, 0.0)
    z = improve / sd
    return max(improve * _norm_cdf(z) + sd * _norm_pdf(z), 0.0)


def probability_of_improvement(mean: float, sd: float, incumbent: float, xi: float) -> float:
    """PI = CDF((mu - f* - xi) / sd); the sd == 0 limit is a 0/1 indicator."""
    if not all(map(math.isfinite, (mean, sd, incumbent, xi))):
        raise ValueError("probability_of_improvement requires finite inputs")
    if sd < 0:
        raise ValueError("standard deviation must be nonnegative")
    improve = mean - incumbent - xi
    if sd == 0.0:
        return 1.0 if improve > 0 else 0.0
    return _norm_cdf(improve / sd)


def acquisition_values(
    means: np.ndarray, sds: np.ndarray, history: SearchHistory, cfg: AcqConfig
) -> np.ndarray:
    """Vectorized acquisition over candidates; means are raw posterior means."""
    mu = np.asarray(means, dtype=float) + cfg.score_offset
    sd = np.asarray(sds, dtype=float)
    incumbent = history.incumbent_value
    xi = ms_ei_xi(history, cfg) if cfg.kind is AcqKind.MSEI else cfg.fixed_xi
    improve = mu - incumbent - xi
    safe_sd = np.where(sd > 0, sd, 1.0)
    z = improve / safe_sd
    cdf = 0.5 * erfc(-z / _SQRT2)
    if cfg.kind is AcqKind.PI:
        return np.where(sd > 0, cdf, (improve > 0).astype(float))
    pdf = _INV_SQRT_2PI * np.exp(-0.5 * z * z)
    ei = improve * cdf + sd * pdf
    return np.maximum(np.where(sd > 0, ei, improve), 0.0)


def select_next(model, candidates, history: SearchHistory, cfg: AcqConfig, posterior=None):
    """Argmax of the configured acquisition over the candidate grid.

    ``candidates`` is a list of ``((x, y), t)`` with all times equal to the
    current frame. Candidates whose location was already sampled this frame
    are excluded; if every candidate is excluded the one with the highest
    posterior variance wins. Ties always break toward the lowest candidate
    index. With an empty history every candidate scores equally and the first
    one is returned. ``posterior`` optionally supplies precomputed
    ``(means, variances)`` arrays to avoid a redundant predict.
    """
    candidates = list(candidates)
    if not candidates:
        raise ValueError("select_next requires a non-empty candidate list")
    t0 = candidates[0][1]
    if any(c[1] != t0 for c in candidates):
        raise ValueError("all candidates must share the current frame time")

    sampled = set(history.locations)
    available = [i for i, c in enumerate(candidates) if (c[0][0], c[0][1]) not in sampled]

    if history.n == 0:
        return candidates[0]

    if posterior is None:
        from .gp import gp_predict

        means, variances = gp_predict(model, candidates)
    else:
        means, variances = posterior

    if not available:
        return candidates[int(np.argmax(variances))]

    acq = acquisition_values(np.asarray(means), np.sqrt(np.asarray(variances)), history, cfg)
    avail = np.asarray(available)
    return candidates[int(avail[int(np.argmax(acq[avail]))])]
