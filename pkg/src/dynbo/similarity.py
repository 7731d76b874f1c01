"""Similarity oracles: how a candidate box is scored against the exemplar.

An oracle answers ``score(frame, box, scale)`` with a scalar in its declared
range and is deterministic per query. Three implementations:

* :class:`NccOracle` - zero-mean normalized cross-correlation of grayscale
  crops against a fixed 64x64 exemplar template (also serves as the template
  matching baseline).
* :class:`DopOracle` - adapts a synthetic dynamic objective so the tracker
  can be exercised without pixels.
* ``ExternalOracle`` (in :mod:`dynbo.protocol`) - delegates scoring to an
  external service over a line-delimited JSON channel.

Scale handling queries the oracle at three box scales {1-p, 1, 1+p} and
keeps the best, recording which scale won.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .dop import DynamicObjective
from .geometry import BoundingBox

_LUMA = (0.299, 0.587, 0.114)


@dataclass(frozen=True)
class ImageCrop:
    """Single-channel image, row-major float pixels in [0, 1]."""

    width: int
    height: int
    pixels: np.ndarray  # shape (height, width), float64

    @classmethod
    def from_array(cls, arr: np.ndarray) -> "ImageCrop":
        a = np.asarray(arr, dtype=float)
        if a.ndim != 2:
            raise ValueError(f"expected a 2-D grayscale array, got shape {a.shape}")
        if not np.all(np.isfinite(a)):
            raise ValueError("image pixels must be finite")
        return cls(width=a.shape[1], height=a.shape[0], pixels=a)


def load_image(path: str | Path) -> ImageCrop:
    """Load an image file as grayscale via the standard luminance weights."""
    from PIL import Image

    with Image.open(path) as im:
        rgb = np.asarray(im.convert("RGB"), dtype=float) / 255.0
    gray = rgb[..., 0] * _LUMA[0] + rgb[..., 1] * _LUMA[1] + rgb[..., 2] * _LUMA[2]
    return ImageCrop.from_array(gray)


@dataclass(frozen=True)
class Frame:
    """One video frame handed to an oracle: dimensions, index, optional data.

    ``image`` is present for pixel-based oracles; ``path`` for oracles that
    load or reference the frame themselves.
    """

    width: int
    height: int
    index: int
    image: ImageCrop | None = None
    path: str | None = None


def ncc_score(template: ImageCrop, patch: ImageCrop) -> float:
    """Zero-mean normalized cross-correlation in [-1, 1].

    Returns 0.0 when either input is constant (zero variance).
    """
    if (template.width, template.height) != (patch.width, patch.height):
        raise ValueError(
            f"dimension mismatch: template {template.width}x{template.height} "
            f"vs patch {patch.width}x{patch.height}"
        )
    a = template.pixels.ravel()
    b = patch.pixels.ravel()
    da = a - a.mean()
    db = b - b.mean()
    denom = math.sqrt(float(da @ da) * float(db @ db))
    if denom == 0.0:
        return 0.0
    return float(da @ db) / denom


def extract_patch(frame: ImageCrop, box: BoundingBox, out_w: int, out_h: int) -> ImageCrop:
    """Crop (and resample) a box from a frame via bilinear interpolation.

    The box may extend past the frame; out-of-frame area is padded with the
    frame's mean intensity. A box entirely outside the frame is an error.
    Pixel (r, c) of the output samples the source at the center of the
    corresponding box cell, with frame pixel centers at (c + 0.5, r + 0.5).
    """
    if out_w < 1 or out_h < 1:
        raise ValueError("output dimensions must be at least 1")
    if box.w <= 0 or box.h <= 0:
        raise ValueError("box width/height must be positive")
    if box.x1 <= 0 or box.y1 <= 0 or box.x0 >= frame.width or box.y0 >= frame.height:
        raise ValueError("box lies entirely outside the frame")

    xs = box.x0 + (np.arange(out_w) + 0.5) * (box.w / out_w)
    ys = box.y0 + (np.arange(out_h) + 0.5) * (box.h / out_h)
    u = xs - 0.5
    v = ys - 0.5
    c0 = np.floor(u).astype(int)
    r0 = np.floor(v).astype(int)
    fx = u - c0
    fy = v - r0

    pad = float(frame.pixels.mean())

    def gather(rows: np.ndarray, cols: np.ndarray) -> np.ndarray:
        rr, cc = np.meshgrid(rows, cols, indexing="ij")
        valid = (rr >= 0) & (rr < frame.height) & (cc >= 0) & (cc < frame.width)
        out = np.full(rr.shape, pad)
        out[valid] = frame.pixels[rr[valid], cc[valid]]
        return out

    p00 = gather(r0, c0)
    p01 = gather(r0, c0 + 1)
    p10 = gather(r0 + 1, c0)
    p11 = gather(r0 + 1, c0 + 1)
    wx = fx[None, :]
    wy = fy[:, None]
    pixels = (
        p00 * (1 - wy) * (1 - wx)
        + p01 * (1 - wy) * wx
        + p10 * wy * (1 - wx)
        + p11 * wy * wx
    )
    return ImageCrop(width=out_w, height=out_h, pixels=pixels)


class SimilarityOracle:
    """Base contract: ``score(frame, box, scale) -> float`` within a declared
    range, deterministic per query. Subclasses implement ``_score``; the base
    counts calls so harnesses can report query budgets."""

    score_lo: float = -1.0
    score_hi: float = 1.0

    def __init__(self) -> None:
        self.calls = 0

    def set_exemplar(self, frame: Frame, box: BoundingBox) -> None:
        """Fix the target's appearance from the initial frame. Default no-op."""

    def score(self, frame: Frame, box: BoundingBox, scale: float = 1.0) -> float:
        self.calls += 1
        return self._score(frame, box, scale)

    def _score(self, frame: Frame, box: BoundingBox, scale: float) -> float:
        raise NotImplementedError


class NccOracle(SimilarityOracle):
    """NCC of a resampled candidate crop against the fixed exemplar template.

    The exemplar is taken once from the initial ground-truth box and never
    updated; all crops are resampled to ``template_size`` squared pixels.
    """

    def __init__(self, template_size: int = 64) -> None:
        super().__init__()
        self.template_size = template_size
        self._template: ImageCrop | None = None

    def set_exemplar(self, frame: Frame, box: BoundingBox) -> None:
        if frame.image is None:
            raise ValueError("NccOracle requires frames with pixel data")
        self._template = extract_patch(frame.image, box, self.template_size, self.template_size)

    def _score(self, frame: Frame, box: BoundingBox, scale: float) -> float:
        if self._template is None:
            raise ValueError("exemplar not set; call set_exemplar first")
        if frame.image is None:
            raise ValueError("NccOracle requires frames with pixel data")
        patch = extract_patch(
            frame.image, box.scaled(scale), self.template_size, self.template_size
        )
        return ncc_score(self._template, patch)


class DopOracle(SimilarityOracle):
    """Scores box centers against a synthetic dynamic objective.

    Pixel centers map to unit-square coordinates through the virtual canvas
    size; scale is ignored (the objective is two-dimensional). Values are
    clipped into the declared range so the oracle contract holds even under
    unbounded observation noise.
    """

    def __init__(
        self, objective: DynamicObjective, canvas_w: int, canvas_h: int, hi: float | None = None
    ) -> None:
        super().__init__()
        self.objective = objective
        self.canvas_w = canvas_w
        self.canvas_h = canvas_h
        self.score_lo = 0.0
        self.score_hi = 1.0 if hi is None else hi

    def _score(self, frame: Frame, box: BoundingBox, scale: float) -> float:
        loc = (box.cx / self.canvas_w, box.cy / self.canvas_h)
        value = self.objective.evaluate(loc, frame.index)
        return min(max(value, self.score_lo), self.score_hi)


@dataclass(frozen=True)
class TripletScore:
    """Scores at the three scales {1-p, 1, 1+p} and the winning scale."""

    scores: tuple[float, float, float]
    best_scale: float
    p: float

    @property
    def value(self) -> float:
        return max(self.scores)


def triplet_score(
    oracle: SimilarityOracle, frame: Frame, box: BoundingBox, p: float = 0.05
) -> TripletScore:
    """Evaluate the oracle at scales {1-p, 1, 1+p} around the box.

    The best scale is the argmax; any tie resolves to 1.0 (no scale change).
    """
    if not 0.0 < p < 0.5:
        raise ValueError("scale step p must lie in (0, 0.5)")
    scales = (1.0 - p, 1.0, 1.0 + p)
    scores = tuple(oracle.score(frame, box, s) for s in scales)
    top = max(scores)
    winners = [s for s, v in zip(scales, scores) if v == top]
    best = 1.0 if len(winners) > 1 else winners[0]
    return TripletScore(scores=scores, best_scale=best, p=p)
