"""Per-frame tracking loop: Bayesian-optimized querying over a search grid.

Each frame is processed with a fixed query budget. Iterations select the next
grid cell by acquisition over the surrogate's posterior, score it through the
similarity oracle at three scales, and fold the observation back into the
surrogate. After the budget is spent the posterior mean is rendered over the
d x d grid, upsampled to the search region's pixel resolution with Catmull-Rom
bicubic interpolation, and the box is re-centered on the field's argmax. Box
size follows the majority vote of the frame's winning triplet scales, damped.

The surrogate's sample window spans the most recent ``window_frames`` frames;
older samples are evicted. Spatial sample coordinates are normalized to the
search region of the frame they were observed in.

The within-frame surrogate update exploits that every new sample lies on the
candidate lattice at the current time: appending a row to the Cholesky factor
then reuses the already-solved candidate column, so an iteration costs one
matrix-vector product. The update is algebraically identical to a full refit
and is tested against the plain ``gp_fit``/``gp_predict``/``select_next``
route.
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass, field, replace
from functools import lru_cache

import numpy as np
from scipy.linalg import solve_triangular

from .acquisition import AcqConfig, SearchHistory, acquisition_values
from .geometry import BoundingBox, clamp_center
from .gp import GpModel, Sample, fit_hyperparams, gp_fit, gp_predict
from .kernels import KernelSpec, SpatioTemporalKernel, cross_covariance
from .similarity import Frame, SimilarityOracle, triplet_score


class DegenerateRegionError(Exception):
    """Search region clamped too small to host the candidate grid."""


def default_kernel(
    spatial_lengthscale: float = 0.2, temporal_lengthscale: float = 2.0
) -> SpatioTemporalKernel:
    return SpatioTemporalKernel(
        spatial=KernelSpec(lengthscale=spatial_lengthscale),
        temporal=KernelSpec(lengthscale=temporal_lengthscale),
    )


@dataclass(frozen=True)
class TrackerConfig:
    budget_per_frame: int = 80
    grid_d: int = 20
    scale_p: float = 0.05
    search_factor: float = 2.0
    window_frames: int = 3
    scale_damping: float = 0.5
    kernel: SpatioTemporalKernel = field(default_factory=default_kernel)
    noise: float = 1e-4
    acq: AcqConfig = field(default_factory=AcqConfig)
    fit_lengthscales: bool = True
    refit_every: int = 0  # 0: train lengthscales once, then freeze
    spatial_grid: tuple[float, ...] = (0.05, 0.1, 0.2, 0.4)
    temporal_grid: tuple[float, ...] = (1.0, 2.0, 4.0)
    sampling: str = "bayes"  # "bayes" (acquisition-driven) or "random" baseline
    sampling_seed: int = 0
    min_box_px: float = 4.0

    def __post_init__(self) -> None:
        if self.budget_per_frame < 1:
            raise ValueError("budget_per_frame must be at least 1")
        if self.grid_d < 2:
            raise ValueError("grid_d must be at least 2")
        if not 0.0 <= self.scale_damping <= 1.0:
            raise ValueError("scale_damping must lie in [0, 1]")
        if self.sampling not in ("bayes", "random"):
            raise ValueError(f"unknown sampling mode {self.sampling!r}")


@dataclass(frozen=True)
class RegionGeometry:
    """Affine map between the search region's pixels, its [0,1]^2 normalized
    coordinates, and the d x d candidate lattice (cell centers)."""

    x0: int
    y0: int
    width: int
    height: int
    d: int

    def lattice(self) -> np.ndarray:
        """Normalized cell-center coordinates, raster order, x fastest; (d^2, 2)."""
        centers = (np.arange(self.d) + 0.5) / self.d
        xx, yy = np.meshgrid(centers, centers)
        return np.column_stack([xx.ravel(), yy.ravel()])

    def norm_to_pixel(self, nx: float, ny: float) -> tuple[float, float]:
        return self.x0 + nx * self.width, self.y0 + ny * self.height

    def pixel_to_norm(self, px: float, py: float) -> tuple[float, float]:
        return (px - self.x0) / self.width, (py - self.y0) / self.height

    @property
    def cell_px(self) -> float:
        return max(self.width, self.height) / self.d


@dataclass(frozen=True)
class ScoreGrid:
    """d x d posterior-mean field plus its mapping back to the search region."""

    values: np.ndarray  # (d, d), row-major over y then x
    geometry: RegionGeometry


@dataclass
class TrackerState:
    config: TrackerConfig
    oracle: SimilarityOracle
    box: BoundingBox
    frame_index: int
    frame_w: int
    frame_h: int
    memory: list[Sample]
    kernel: SpatioTemporalKernel
    lengthscales_fitted: bool = False


def search_region(
    box: BoundingBox, frame_w: int, frame_h: int, search_factor: float, d: int
) -> RegionGeometry:
    """Square region of half-width search_factor * max(w, h) around the box,
    clamped to the frame."""
    half = search_factor * max(box.w, box.h)
    x0 = max(int(math.floor(box.cx - half)), 0)
    y0 = max(int(math.floor(box.cy - half)), 0)
    x1 = min(int(math.ceil(box.cx + half)), frame_w)
    y1 = min(int(math.ceil(box.cy + half)), frame_h)
    if x1 - x0 < 2 or y1 - y0 < 2:
        raise DegenerateRegionError(
            f"search region clamped to {x1 - x0}x{y1 - y0} pixels; cannot host a grid"
        )
    return RegionGeometry(x0=x0, y0=y0, width=x1 - x0, height=y1 - y0, d=d)


def tracker_init(
    first_frame: Frame, gt_box: BoundingBox, oracle: SimilarityOracle, cfg: TrackerConfig
) -> TrackerState:
    """Fix the exemplar from the ground-truth box and start at frame 0."""
    if gt_box.w <= 0 or gt_box.h <= 0 or not gt_box.inside(first_frame.width, first_frame.height):
        raise ValueError("ground-truth box must lie inside the first frame with positive size")
    if first_frame.index != 0:
        raise ValueError("initialization frame must have index 0")
    oracle.set_exemplar(first_frame, gt_box)
    return TrackerState(
        config=cfg,
        oracle=oracle,
        box=gt_box,
        frame_index=0,
        frame_w=first_frame.width,
        frame_h=first_frame.height,
        memory=[],
        kernel=cfg.kernel,
    )


@lru_cache(maxsize=8)
def _lattice_spatial_gram(spec: KernelSpec, d: int) -> np.ndarray:
    """Spatial kernel over all lattice-point pairs; shared across frames."""
    centers = (np.arange(d) + 0.5) / d
    xx, yy = np.meshgrid(centers, centers)
    locs = np.column_stack([xx.ravel(), yy.ravel()])
    diff = locs[:, None, :] - locs[None, :, :]
    r = np.sqrt(np.einsum("ijk,ijk->ij", diff, diff))
    from .kernels import _matern

    return _matern(spec, r / spec.lengthscale)


class _FrameSurrogate:
    """GP posterior over the frame's candidate lattice, extended in place.

    Maintains the growing Cholesky factor L, the whitened observation vector
    w = L^-1 y, and the whitened candidate cross-covariance V = L^-1 K_*.
    Because each appended sample is lattice point j at the current time, its
    covariance against the existing samples equals column j of the matrix V
    solves, so the append needs no triangular solve:

        x = V[:, j];  lam = sqrt(noise + var_j);  w+ = (y - mean_j) / lam

    and the posterior updates are rank-one. Falls back to a full refit if the
    pivot degenerates.
    """

    def __init__(
        self,
        kernel: SpatioTemporalKernel,
        noise: float,
        mean_shift: float,
        cand_locs: np.ndarray,
        t: int,
        init_samples: list[Sample],
        capacity_extra: int,
    ) -> None:
        self.kernel = kernel
        self.noise = noise
        self.mean_shift = mean_shift
        self.cand_locs = cand_locs
        self.t = t
        m = len(cand_locs)
        self.lattice_cov = _lattice_spatial_gram(kernel.spatial, int(round(math.sqrt(m)))) * (
            kernel.temporal.variance
        )
        self.samples: list[Sample] = []
        self.open_mask = np.ones(m, dtype=bool)
        cap = len(init_samples) + capacity_extra
        self.chol = np.zeros((cap, cap))
        self.w = np.zeros(cap)
        self.v = np.zeros((cap, m))
        self.n = 0
        prior = kernel.prior_variance
        self.means = np.full(m, mean_shift, dtype=float)
        self.variances = np.full(m, prior, dtype=float)
        if init_samples:
            self._bootstrap(init_samples)

    def _bootstrap(self, init_samples: list[Sample]) -> None:
        model = gp_fit(init_samples, self.kernel, self.noise, self.mean_shift)
        self.noise = model.noise  # jitter may have escalated
        n = model.n
        if self.chol.shape[0] < n:
            raise ValueError("surrogate capacity too small for the initial window")
        self.samples = list(init_samples)
        self.n = n
        self.chol[:n, :n] = model.chol
        cand_times = np.full(len(self.cand_locs), float(self.t))
        k_c = cross_covariance(
            model.kernel, model.locations, model.times, self.cand_locs, cand_times
        )
        self.v[:n] = solve_triangular(model.chol, k_c, lower=True, check_finite=False)
        self.w[:n] = solve_triangular(model.chol, model.values, lower=True, check_finite=False)
        self.means = self.v[:n].T @ self.w[:n] + self.mean_shift
        self.variances = np.maximum(
            self.kernel.prior_variance - np.einsum("ij,ij->j", self.v[:n], self.v[:n]), 0.0
        )

    def add(self, lattice_idx: int, sample: Sample) -> None:
        n = self.n
        var_j = float(self.variances[lattice_idx])
        lam_sq = self.noise + var_j
        if lam_sq < 1e-12:
            # Degenerate pivot (duplicate sample at ~zero noise): rebuild with
            # the jitter-escalating fit.
            self._rebuild(sample)
            return
        lam = math.sqrt(lam_sq)
        x = self.v[:n, lattice_idx].copy()
        k_cn = self.lattice_cov[lattice_idx]
        v_row = (k_cn - x @ self.v[:n]) / lam
        w_new = ((sample.value - self.mean_shift) - (self.means[lattice_idx] - self.mean_shift)) / lam
        self.chol[n, :n] = x
        self.chol[n, n] = lam
        self.v[n] = v_row
        self.w[n] = w_new
        self.means = self.means + v_row * w_new
        self.variances = np.maximum(self.variances - v_row * v_row, 0.0)
        self.samples.append(sample)
        self.n = n + 1
        self.open_mask[lattice_idx] = False

    def _rebuild(self, sample: Sample) -> None:
        samples = self.samples + [sample]
        open_mask = self.open_mask.copy()
        fresh = _FrameSurrogate(
            self.kernel,
            self.noise,
            self.mean_shift,
            self.cand_locs,
            self.t,
            samples,
            self.chol.shape[0] - self.n - 1,
        )
        self.__dict__.update(fresh.__dict__)
        self.open_mask = open_mask
        idx = self._lattice_index(sample.location)
        if idx is not None:
            self.open_mask[idx] = False

    def _lattice_index(self, location: tuple[float, float]) -> int | None:
        match = np.flatnonzero(
            (self.cand_locs[:, 0] == location[0]) & (self.cand_locs[:, 1] == location[1])
        )
        return int(match[0]) if len(match) else None

    def select_index(self, history: SearchHistory, cfg: AcqConfig) -> int:
        """Inline equivalent of :func:`dynbo.acquisition.select_next` over the
        lattice; returns the chosen lattice index."""
        if not self.open_mask.any():
            return int(np.argmax(self.variances))
        if history.n == 0:
            return int(np.argmax(self.open_mask))
        acq = acquisition_values(self.means, np.sqrt(self.variances), history, cfg)
        return int(np.argmax(np.where(self.open_mask, acq, -np.inf)))

    def to_model(self) -> GpModel:
        """Materialize the current window as a plain model (for rendering)."""
        n = self.n
        samples = tuple(self.samples)
        locs = np.array([s.location for s in samples], dtype=float)
        times = np.array([s.time for s in samples], dtype=float)
        values = np.array([s.value for s in samples], dtype=float) - self.mean_shift
        chol = self.chol[:n, :n].copy()
        from scipy.linalg import cho_solve

        alpha = cho_solve((chol, True), values, check_finite=False)
        return GpModel(
            samples=samples,
            kernel=self.kernel,
            noise=self.noise,
            mean_shift=self.mean_shift,
            chol=chol,
            alpha=alpha,
            locations=locs,
            times=times,
            values=values,
        )

    @property
    def posterior(self) -> tuple[np.ndarray, np.ndarray]:
        return self.means, self.variances


def _maybe_fit_lengthscales(
    state: TrackerState, t: int, midpoint: float
) -> tuple[SpatioTemporalKernel, bool]:
    """Train lengthscales once the sample window has filled; optionally refit
    periodically. Returns the (possibly updated) kernel and fitted flag."""
    cfg = state.config
    kernel, fitted = state.kernel, state.lengthscales_fitted
    due = (not fitted and t > cfg.window_frames) or (
        fitted and cfg.refit_every > 0 and t % cfg.refit_every == 0
    )
    if not (cfg.fit_lengthscales and due):
        return kernel, fitted
    window = list(state.memory)
    if len(window) < 5 or len({s.time for s in window}) < 2:
        return kernel, fitted
    ls, lt = fit_hyperparams(
        window, kernel, cfg.spatial_grid, cfg.temporal_grid, cfg.noise, midpoint
    )
    kernel = SpatioTemporalKernel(
        spatial=replace(kernel.spatial, lengthscale=ls),
        temporal=replace(kernel.temporal, lengthscale=lt),
    )
    return kernel, True


def tracker_step(state: TrackerState, frame: Frame) -> tuple[TrackerState, BoundingBox]:
    """Process the next frame; returns the advanced state and predicted box."""
    cfg = state.config
    if (frame.width, frame.height) != (state.frame_w, state.frame_h):
        raise ValueError("frame dimensions differ from the initialized sequence")
    t = state.frame_index + 1
    if frame.index != t:
        raise ValueError(f"expected frame index {t}, got {frame.index}")

    oracle = state.oracle
    midpoint = 0.5 * (oracle.score_lo + oracle.score_hi)
    offset = -oracle.score_lo
    xi_max = cfg.acq.xi_max
    if xi_max is None:
        xi_max = 10.0 * (oracle.score_hi - oracle.score_lo)
    acq_cfg = replace(cfg.acq, score_offset=offset, xi_max=xi_max)

    kernel, fitted = _maybe_fit_lengthscales(state, t, midpoint)

    geom = search_region(state.box, state.frame_w, state.frame_h, cfg.search_factor, cfg.grid_d)
    cand_locs = geom.lattice()

    window = [s for s in state.memory if s.time > t - cfg.window_frames]
    surrogate = _FrameSurrogate(
        kernel, cfg.noise, midpoint, cand_locs, t, window, cfg.budget_per_frame + 1
    )

    history = SearchHistory()
    best_scales: list[float] = []
    memory = list(state.memory)
    rng = np.random.default_rng((cfg.sampling_seed, t)) if cfg.sampling == "random" else None

    for _ in range(cfg.budget_per_frame):
        if rng is not None:
            open_idx = np.flatnonzero(surrogate.open_mask)
            pool = open_idx if len(open_idx) else np.arange(len(cand_locs))
            idx = int(pool[int(rng.integers(len(pool)))])
        else:
            idx = surrogate.select_index(history, acq_cfg)
        loc = (float(cand_locs[idx, 0]), float(cand_locs[idx, 1]))

        px, py = geom.norm_to_pixel(*loc)
        query_box = BoundingBox(px, py, state.box.w, state.box.h)
        trip = triplet_score(oracle, frame, query_box, cfg.scale_p)
        sample = Sample(location=loc, time=t, scale=trip.best_scale, value=trip.value)
        history.record(loc, trip.value + offset)
        best_scales.append(trip.best_scale)
        memory.append(sample)
        surrogate.add(idx, sample)

    model = surrogate.to_model()
    grid = render_score_grid(model, t, geom, cfg.grid_d)
    fieldmap = upsample_bicubic(grid, geom.width, geom.height)
    new_box = update_location(fieldmap, geom, state, best_scales)

    memory = [s for s in memory if s.time > t - cfg.window_frames]
    new_state = replace(
        state,
        box=new_box,
        frame_index=t,
        memory=memory,
        kernel=kernel,
        lengthscales_fitted=fitted,
    )
    return new_state, new_box


def render_score_grid(model: GpModel, t: int, geom: RegionGeometry, d: int) -> ScoreGrid:
    """Posterior mean at the d x d cell-center lattice of the region at time t."""
    if d != geom.d:
        geom = replace(geom, d=d)
    locs = geom.lattice()
    means, _ = gp_predict(model, (locs, np.full(len(locs), float(t))))
    return ScoreGrid(values=means.reshape(d, d), geometry=geom)


def _catmull_rom_weights(n_out: int, n_in: int) -> np.ndarray:
    """Dense (n_out, n_in) interpolation matrix, taps clamped at the edges.

    Output position c maps to grid coordinate (c + 0.5) * n_in / n_out - 0.5,
    so lattice-aligned outputs reproduce grid values exactly.
    """
    g = (np.arange(n_out) + 0.5) * (n_in / n_out) - 0.5
    base = np.floor(g).astype(int)
    s = g - base
    w = np.empty((n_out, 4))
    w[:, 0] = 0.5 * (-s + 2 * s**2 - s**3)
    w[:, 1] = 0.5 * (2 - 5 * s**2 + 3 * s**3)
    w[:, 2] = 0.5 * (s + 4 * s**2 - 3 * s**3)
    w[:, 3] = 0.5 * (-(s**2) + s**3)
    mat = np.zeros((n_out, n_in))
    rows = np.arange(n_out)
    for k in range(4):
        cols = np.clip(base + k - 1, 0, n_in - 1)
        np.add.at(mat, (rows, cols), w[:, k])
    return mat


def upsample_bicubic(grid: ScoreGrid | np.ndarray, out_w: int, out_h: int) -> np.ndarray:
    """Catmull-Rom upsampling of a score grid to (out_h, out_w).

    Separable; border taps are edge-clamped. The output passes through the
    grid values wherever an output pixel center coincides with a lattice
    node.
    """
    values = grid.values if isinstance(grid, ScoreGrid) else np.asarray(grid, dtype=float)
    d_y, d_x = values.shape
    if out_w < d_x or out_h < d_y:
        raise ValueError("output dimensions must be at least the grid dimensions")
    wy = _catmull_rom_weights(out_h, d_y)
    wx = _catmull_rom_weights(out_w, d_x)
    return wy @ values @ wx.T


def _scale_mode(best_scales: list[float]) -> float:
    """Most frequent winning scale; ties prefer no change, then the smaller."""
    if not best_scales:
        return 1.0
    counts = Counter(best_scales)
    top = max(counts.values())
    tied = sorted(s for s, c in counts.items() if c == top)
    if len(tied) > 1:
        return 1.0 if 1.0 in tied else min(tied, key=lambda s: (abs(s - 1.0), s))
    return tied[0]


def update_location(
    fieldmap: np.ndarray, geom: RegionGeometry, state: TrackerState, best_scales: list[float]
) -> BoundingBox:
    """Re-center the box on the upsampled field's argmax and adjust its size.

    Argmax ties resolve to the position nearest the previous center. The new
    width/height multiply by 1 + damping * (scale_mode - 1), clamped to the
    frame.
    """
    if not np.all(np.isfinite(fieldmap)):
        raise ValueError("score field must be finite")
    cfg = state.config
    prev = state.box
    rows, cols = np.nonzero(fieldmap == fieldmap.max())
    px = geom.x0 + cols + 0.5
    py = geom.y0 + rows + 0.5
    pick = int(np.argmin((px - prev.cx) ** 2 + (py - prev.cy) ** 2))
    cx, cy = float(px[pick]), float(py[pick])

    factor = 1.0 + cfg.scale_damping * (_scale_mode(best_scales) - 1.0)
    w = min(max(prev.w * factor, cfg.min_box_px), float(state.frame_w))
    h = min(max(prev.h * factor, cfg.min_box_px), float(state.frame_h))
    return clamp_center(BoundingBox(cx, cy, w, h), state.frame_w, state.frame_h)
