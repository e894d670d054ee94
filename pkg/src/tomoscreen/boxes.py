"""Bounding-box algebra: IOU and greedy non-maximum suppression.

Boxes use continuous corner coordinates (x_min, y_min, x_max, y_max) with
areas computed as (x_max - x_min) * (y_max - y_min). NMS suppresses on
strict inequality (iou > threshold), so boxes at exactly the threshold
survive, and score ties are broken by input order.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

CSV_FIELDS = ("x_min", "y_min", "x_max", "y_max", "score", "slice_index")


@dataclass(frozen=True)
class ScoredBox:
    """Axis-aligned box with a classification score in [0, 1]."""

    x_min: float
    y_min: float
    x_max: float
    y_max: float
    score: float
    slice_index: int | None = None

    def __post_init__(self):
        if not (self.x_min < self.x_max and self.y_min < self.y_max):
            raise ValueError(
                f"degenerate box ({self.x_min}, {self.y_min}, {self.x_max}, {self.y_max})"
            )
        if not 0.0 <= self.score <= 1.0:
            raise ValueError(f"score {self.score} outside [0, 1]")
        if self.slice_index is not None and self.slice_index < 0:
            raise ValueError(f"negative slice_index {self.slice_index}")

    @property
    def area(self) -> float:
        return (self.x_max - self.x_min) * (self.y_max - self.y_min)

    def with_slice(self, slice_index: int) -> "ScoredBox":
        return replace(self, slice_index=slice_index)


def iou(a: ScoredBox, b: ScoredBox) -> float:
    """Intersection over union of two boxes; 0 when disjoint."""
    ix = min(a.x_max, b.x_max) - max(a.x_min, b.x_min)
    iy = min(a.y_max, b.y_max) - max(a.y_min, b.y_min)
    if ix <= 0.0 or iy <= 0.0:
        return 0.0
    inter = ix * iy
    return inter / (a.area + b.area - inter)


def nms(boxes: list[ScoredBox], iou_threshold: float) -> list[ScoredBox]:
    """Greedy non-maximum suppression.

    Repeatedly keeps the highest-scoring remaining box and discards every
    box with iou > iou_threshold against it. Ties are broken by lower
    input index. Returns kept boxes sorted by descending score.
    """
    if not 0.0 <= iou_threshold <= 1.0:
        raise ValueError(f"iou_threshold {iou_threshold} outside [0, 1]")
    if not boxes:
        return []

    order = sorted(range(len(boxes)), key=lambda i: (-boxes[i].score, i))
    x0 = np.array([b.x_min for b in boxes])
    y0 = np.array([b.y_min for b in boxes])
    x1 = np.array([b.x_max for b in boxes])
    y1 = np.array([b.y_max for b in boxes])
    areas = (x1 - x0) * (y1 - y0)

    alive = np.ones(len(boxes), dtype=bool)
    kept: list[int] = []
    for idx in order:
        if not alive[idx]:
            continue
        kept.append(idx)
        alive[idx] = False
        cand = np.flatnonzero(alive)
        if cand.size == 0:
            break
        iw = np.minimum(x1[idx], x1[cand]) - np.maximum(x0[idx], x0[cand])
        ih = np.minimum(y1[idx], y1[cand]) - np.maximum(y0[idx], y0[cand])
        inter = np.clip(iw, 0.0, None) * np.clip(ih, 0.0, None)
        overlap = inter / (areas[idx] + areas[cand] - inter)
        alive[cand[overlap > iou_threshold]] = False
    return [boxes[i] for i in kept]


# ---------------------------------------------------------------------------
# CSV wire format: x_min,y_min,x_max,y_max,score,slice_index
# ---------------------------------------------------------------------------


def boxes_to_csv(boxes: list[ScoredBox]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_FIELDS)
    for b in boxes:
        writer.writerow(
            [
                repr(b.x_min),
                repr(b.y_min),
                repr(b.x_max),
                repr(b.y_max),
                repr(b.score),
                "" if b.slice_index is None else b.slice_index,
            ]
        )
    return buf.getvalue()


def boxes_from_csv(text: str) -> list[ScoredBox]:
    reader = csv.reader(io.StringIO(text))
    header = next(reader, None)
    if header is None:
        return []
    if tuple(h.strip() for h in header) != CSV_FIELDS:
        raise ValueError(f"unexpected box CSV header: {header}")
    boxes = []
    for row in reader:
        if not row:
            continue
        if len(row) != len(CSV_FIELDS):
            raise ValueError(f"malformed box CSV row: {row}")
        slice_index = int(row[5]) if row[5] != "" else None
        boxes.append(
            ScoredBox(
                x_min=float(row[0]),
                y_min=float(row[1]),
                x_max=float(row[2]),
                y_max=float(row[3]),
                score=float(row[4]),
                slice_index=slice_index,
            )
        )
    return boxes


def write_boxes_csv(boxes: list[ScoredBox], path: str | Path) -> None:
    Path(path).write_text(boxes_to_csv(boxes))


def read_boxes_csv(path: str | Path) -> list[ScoredBox]:
    return boxes_from_csv(Path(path).read_text())
