"""Axis-aligned bounding boxes in pixel coordinates and overlap arithmetic."""

from __future__ import annotations

import math
from dataclasses import dataclass, replace


@dataclass(frozen=True)
class BoundingBox:
    """Axis-aligned box: center (cx, cy) plus width and height, in pixels."""

    cx: float
    cy: float
    w: float
    h: float

    @classmethod
    def from_xywh(cls, x: float, y: float, w: float, h: float) -> "BoundingBox":
        """Build from top-left corner form (x, y, w, h)."""
        return cls(x + w / 2.0, y + h / 2.0, w, h)

    @property
    def x0(self) -> float:
        return self.cx - self.w / 2.0

    @property
    def y0(self) -> float:
        return self.cy - self.h / 2.0

    @property
    def x1(self) -> float:
        return self.cx + self.w / 2.0

    @property
    def y1(self) -> float:
        return self.cy + self.h / 2.0

    @property
    def area(self) -> float:
        return self.w * self.h

    def scaled(self, factor: float) -> "BoundingBox":
        """Same center, width and height multiplied by ``factor``."""
        return replace(self, w=self.w * factor, h=self.h * factor)

    def inside(self, frame_w: float, frame_h: float) -> bool:
        return self.x0 >= 0 and self.y0 >= 0 and self.x1 <= frame_w and self.y1 <= frame_h


def iou(a: BoundingBox, b: BoundingBox) -> float:
    """Intersection over union in continuous pixel measure, in [0, 1].

    Raises on boxes with non-positive area.
    """
    if a.area <= 0 or b.area <= 0:
        raise ValueError("iou requires boxes with positive area")
    ix = min(a.x1, b.x1) - max(a.x0, b.x0)
    iy = min(a.y1, b.y1) - max(a.y0, b.y0)
    inter = max(ix, 0.0) * max(iy, 0.0)
    union = a.area + b.area - inter
    return inter / union


def clamp_center(box: BoundingBox, frame_w: float, frame_h: float) -> BoundingBox:
    """Clamp the box center into the frame rectangle; size unchanged."""
    cx = min(max(box.cx, 0.0), float(frame_w))
    cy = min(max(box.cy, 0.0), float(frame_h))
    return replace(box, cx=cx, cy=cy)


def center_distance(a: BoundingBox, b: BoundingBox) -> float:
    return math.hypot(a.cx - b.cx, a.cy - b.cy)
