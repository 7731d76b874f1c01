"""Dynamic optimization problems with known ground truth.

A dynamic objective is a time-indexed scalar field over the unit square; the
tracking task is to follow its moving argmax. The built-in benchmark is a
single Gaussian bump whose center follows a constant-velocity trajectory that
reflects off the boundary, optionally with seeded observation noise. Because
the trajectory is analytic, localization error can be measured exactly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

_BRUTE_FORCE_GRID = 200


@dataclass(frozen=True)
class MovingPeakParams:
    start: tuple[float, float] = (0.35, 0.45)
    velocity: tuple[float, float] = (0.012, 0.008)
    peak_width: float = 0.10
    peak_height: float = 1.0
    noise_sd: float = 0.0
    seed: int = 0

    def __post_init__(self) -> None:
        if self.peak_width <= 0:
            raise ValueError("peak_width must be positive")
        if self.noise_sd < 0:
            raise ValueError("noise_sd must be nonnegative")
        if not all(0.0 <= c <= 1.0 for c in self.start):
            raise ValueError("start must lie in the unit square")


@dataclass(frozen=True)
class DynamicObjective:
    """Time-evolving objective over [0, 1]^2 with a finite horizon.

    ``evaluate(location, t)`` is deterministic given the seed; ``center``
    yields the analytic argmax when one is known (None for arbitrary
    objectives, which fall back to a brute-force grid search).
    """

    evaluate: Callable[[tuple[float, float], int], float]
    horizon: int
    center: Callable[[int], tuple[float, float]] | None = None
    bounds: Callable[[int], tuple[float, float, float, float]] = field(
        default=lambda t: (0.0, 0.0, 1.0, 1.0)
    )


def _reflect(u: float) -> float:
    """Fold a coordinate back into [0, 1] by mirror reflection."""
    m = math.fmod(u, 2.0)
    if m < 0:
        m += 2.0
    return m if m <= 1.0 else 2.0 - m


def peak_center(params: MovingPeakParams, t: int) -> tuple[float, float]:
    return (
        _reflect(params.start[0] + params.velocity[0] * t),
        _reflect(params.start[1] + params.velocity[1] * t),
    )


_M64 = (1 << 64) - 1


def _mix64(z: int) -> int:
    """splitmix64 finalizer; uniform avalanche over 64-bit words."""
    z = (z + 0x9E3779B97F4A7C15) & _M64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _M64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _M64
    return z ^ (z >> 31)


def _noise(params: MovingPeakParams, location: tuple[float, float], t: int) -> float:
    if params.noise_sd == 0.0:
        return 0.0
    # Counter-style generator keyed on (seed, t, location bits): the draw is a
    # pure function of the query, so evaluation order and concurrency cannot
    # change it.
    h = _mix64(params.seed & _M64)
    for word in (
        t & _M64,
        np.float64(location[0]).view(np.uint64).item(),
        np.float64(location[1]).view(np.uint64).item(),
    ):
        h = _mix64(h ^ word)
    u1 = ((h >> 11) + 1) / (2**53 + 1)  # uniform in (0, 1]
    u2 = _mix64(h) >> 11
    return params.noise_sd * math.sqrt(-2.0 * math.log(u1)) * math.cos(
        2.0 * math.pi * (u2 / 2**53)
    )


def make_moving_peak(params: MovingPeakParams, horizon: int) -> DynamicObjective:
    """Gaussian bump of the given width/height riding the reflecting trajectory."""

    def evaluate(location: tuple[float, float], t: int) -> float:
        cx, cy = peak_center(params, t)
        d2 = (location[0] - cx) ** 2 + (location[1] - cy) ** 2
        return params.peak_height * math.exp(-d2 / (2.0 * params.peak_width**2)) + _noise(
            params, location, t
        )

    return DynamicObjective(
        evaluate=evaluate, horizon=horizon, center=lambda t: peak_center(params, t)
    )


def true_argmax(objective: DynamicObjective, t: int) -> tuple[float, float]:
    """Ground-truth maximizer at frame ``t``.

    Analytic when the objective knows its center; otherwise the argmax over a
    200 x 200 cell-center grid.
    """
    if not (0 <= t < objective.horizon):
        raise ValueError(f"frame {t} outside horizon {objective.horizon}")
    if objective.center is not None:
        return objective.center(t)
    g = _BRUTE_FORCE_GRID
    coords = (np.arange(g) + 0.5) / g
    best_val = -math.inf
    best = (0.0, 0.0)
    for y in coords:
        for x in coords:
            v = objective.evaluate((float(x), float(y)), t)
            if v > best_val:
                best_val = v
                best = (float(x), float(y))
    return best
