"""Sequence ingestion, IOU evaluation, the template-matching baseline, and
report emission.

Sequences follow the common layout of a directory of ordered image files plus
a ``groundtruth.txt`` with one box per line, either as ``x,y,w,h`` (top-left
corner form) or as an 8-number polygon whose axis-aligned hull is taken.
Evaluation initializes on frame 0's ground truth and scores frames 1..T-1 by
intersection over union; there is no re-initialization after failure.
"""

from __future__ import annotations

import json
import math
import time
from dataclasses import dataclass, field
from pathlib import Path

from .config import config_snapshot
from .geometry import BoundingBox, iou
from .protocol import ProtocolError
from .similarity import Frame, NccOracle, SimilarityOracle, load_image
from .tracker import TrackerConfig, tracker_init, tracker_step

_IMAGE_SUFFIXES = {".jpg", ".jpeg", ".png", ".bmp", ".ppm", ".pgm", ".tif", ".tiff"}


class SequenceError(Exception):
    pass


class MissingGroundTruthError(SequenceError):
    pass


class GroundTruthParseError(SequenceError):
    def __init__(self, line_no: int, detail: str) -> None:
        super().__init__(f"groundtruth line {line_no}: {detail}")
        self.line_no = line_no


class FrameCountMismatchError(SequenceError):
    pass


@dataclass(frozen=True)
class Sequence:
    name: str
    frame_paths: tuple[str, ...]
    boxes: tuple[BoundingBox, ...]

    def __len__(self) -> int:
        return len(self.frame_paths)


def _parse_gt_line(line: str, line_no: int) -> BoundingBox:
    parts = [p for p in line.replace(",", " ").split() if p]
    try:
        nums = [float(p) for p in parts]
    except ValueError:
        raise GroundTruthParseError(line_no, f"not numeric: {line!r}") from None
    if len(nums) == 4:
        x, y, w, h = nums
        return BoundingBox.from_xywh(x, y, w, h)
    if len(nums) == 8:
        xs, ys = nums[0::2], nums[1::2]
        return BoundingBox.from_xywh(min(xs), min(ys), max(xs) - min(xs), max(ys) - min(ys))
    raise GroundTruthParseError(line_no, f"expected 4 or 8 numbers, got {len(nums)}")


def load_sequence(directory: str | Path) -> Sequence:
    """Load a sequence directory: sorted image files plus groundtruth.txt."""
    directory = Path(directory)
    gt_path = directory / "groundtruth.txt"
    if not gt_path.is_file():
        raise MissingGroundTruthError(f"no groundtruth.txt in {directory}")
    frames = sorted(
        str(p) for p in directory.iterdir() if p.suffix.lower() in _IMAGE_SUFFIXES
    )
    boxes = []
    with open(gt_path, "r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            boxes.append(_parse_gt_line(line, line_no))
    if len(frames) != len(boxes):
        raise FrameCountMismatchError(
            f"{len(frames)} frames but {len(boxes)} ground-truth boxes in {directory}"
        )
    if len(frames) < 2:
        raise SequenceError(f"sequence needs at least 2 frames, found {len(frames)}")
    return Sequence(name=directory.name, frame_paths=tuple(frames), boxes=tuple(boxes))


@dataclass
class EvalReport:
    """Per-frame IOU trace with its summary statistics (population std)."""

    name: str
    iou_trace: list[float]
    config: dict[str, str] = field(default_factory=dict)
    wall_time: float = 0.0
    oracle_calls: int = 0
    complete: bool = True
    mean_iou: float = field(init=False)
    std_iou: float = field(init=False)

    def __post_init__(self) -> None:
        n = len(self.iou_trace)
        self.mean_iou = sum(self.iou_trace) / n if n else 0.0
        self.std_iou = (
            math.sqrt(sum((v - self.mean_iou) ** 2 for v in self.iou_trace) / n) if n else 0.0
        )


def _load_frame(seq: Sequence, index: int) -> Frame:
    img = load_image(seq.frame_paths[index])
    return Frame(
        width=img.width, height=img.height, index=index, image=img, path=seq.frame_paths[index]
    )


def run_eval(
    seq: Sequence,
    cfg: TrackerConfig | None = None,
    oracle: SimilarityOracle | None = None,
    name: str = "dynbo",
) -> EvalReport:
    """Track a sequence and score it against ground truth.

    Frame 0 initializes and is never scored; oracle/session failures produce
    a partial trace flagged incomplete.
    """
    cfg = cfg or TrackerConfig()
    oracle = oracle or NccOracle()
    start = time.perf_counter()
    calls0 = oracle.calls
    frame0 = _load_frame(seq, 0)
    state = tracker_init(frame0, seq.boxes[0], oracle, cfg)
    trace: list[float] = []
    complete = True
    for i in range(1, len(seq)):
        try:
            state, predicted = tracker_step(state, _load_frame(seq, i))
        except ProtocolError:
            complete = False
            break
        trace.append(iou(predicted, seq.boxes[i]))
    return EvalReport(
        name=name,
        iou_trace=trace,
        config=config_snapshot(cfg),
        wall_time=time.perf_counter() - start,
        oracle_calls=oracle.calls - calls0,
        complete=complete,
    )


def run_baseline_tm(
    seq: Sequence,
    stride: int = 1,
    search_factor: float = 2.0,
    template_size: int = 64,
    name: str = "tm",
) -> EvalReport:
    """Exhaustive NCC scan baseline: fixed exemplar, no scale handling.

    Every frame, all box placements on a ``stride``-spaced offset grid inside
    the search region are scored and the best becomes the new box. A stride
    at least the region's half-span degenerates to the previous box alone.
    """
    if stride < 1:
        raise ValueError("stride must be at least 1")
    oracle = NccOracle(template_size)
    start = time.perf_counter()
    frame0 = _load_frame(seq, 0)
    oracle.set_exemplar(frame0, seq.boxes[0])
    box = seq.boxes[0]
    trace: list[float] = []
    complete = True
    for i in range(1, len(seq)):
        frame = _load_frame(seq, i)
        half = search_factor * max(box.w, box.h)
        reach = int(half // stride)
        offsets = [k * stride for k in range(-reach, reach + 1)]
        best_score = -math.inf
        best_center = (box.cx, box.cy)
        try:
            for dy in offsets:
                cy = box.cy + dy
                if not 0 <= cy <= frame.height:
                    continue
                for dx in offsets:
                    cx = box.cx + dx
                    if not 0 <= cx <= frame.width:
                        continue
                    s = oracle.score(frame, BoundingBox(cx, cy, box.w, box.h))
                    if s > best_score:
                        best_score = s
                        best_center = (cx, cy)
        except ProtocolError:
            complete = False
            break
        box = BoundingBox(best_center[0], best_center[1], box.w, box.h)
        trace.append(iou(box, seq.boxes[i]))
    return EvalReport(
        name=name,
        iou_trace=trace,
        config={"tm.stride": str(stride), "tm.search_factor": str(search_factor)},
        wall_time=time.perf_counter() - start,
        oracle_calls=oracle.calls,
        complete=complete,
    )


def emit_report(reports: list[EvalReport], fmt: str = "csv") -> dict[str, bytes]:
    """Serialize reports to named file contents.

    CSV mode yields one ``<name>_trace.csv`` per report (header ``frame,iou``)
    plus a ``summary.csv``; JSON mode yields a single ``report.json``. Floats
    carry six decimal places. Report names are assumed distinct.
    """
    if not reports:
        raise ValueError("emit_report requires at least one report")
    for r in reports:
        if not r.iou_trace:
            raise ValueError(f"report {r.name!r} has an empty trace")
    if fmt == "csv":
        files: dict[str, bytes] = {}
        for r in reports:
            lines = ["frame,iou"]
            lines += [f"{i},{v:.6f}" for i, v in enumerate(r.iou_trace, start=1)]
            files[f"{r.name}_trace.csv"] = ("\n".join(lines) + "\n").encode()
        summary = ["tracker,mean_iou,std_iou,frames,oracle_calls"]
        summary += [
            f"{r.name},{r.mean_iou:.6f},{r.std_iou:.6f},{len(r.iou_trace)},{r.oracle_calls}"
            for r in reports
        ]
        files["summary.csv"] = ("\n".join(summary) + "\n").encode()
        return files
    if fmt == "json":
        doc = {
            "reports": [
                {
                    "tracker": r.name,
                    "mean_iou": round(r.mean_iou, 6),
                    "std_iou": round(r.std_iou, 6),
                    "frames": len(r.iou_trace),
                    "oracle_calls": r.oracle_calls,
                    "complete": r.complete,
                    "trace": [round(v, 6) for v in r.iou_trace],
                    "config": r.config,
                }
                for r in reports
            ]
        }
        return {"report.json": (json.dumps(doc, indent=2) + "\n").encode()}
    raise ValueError(f"unknown report format {fmt!r}")


__all__ = [
    "Sequence",
    "EvalReport",
    "load_sequence",
    "iou",
    "run_eval",
    "run_baseline_tm",
    "emit_report",
    "SequenceError",
    "MissingGroundTruthError",
    "GroundTruthParseError",
    "FrameCountMismatchError",
]
