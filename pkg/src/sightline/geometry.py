"""Bounding-box geometry and grid-tensor decoding.

Boxes live in normalized center format ``(cx, cy, w, h)``; pixel units only
appear at I/O boundaries.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

NUM_BOX_CHANNELS = 5  # x, y, w, h, conf


@dataclass(frozen=True)
class BoundingBox:
    cx: float
    cy: float
    w: float
    h: float

    def __post_init__(self) -> None:
        if not (self.w >= 0 and self.h >= 0):
            raise ValueError(f"box width/height must be non-negative, got w={self.w} h={self.h}")

    @property
    def area(self) -> float:
        return self.w * self.h


@dataclass(frozen=True)
class GroundTruthBox:
    class_id: int
    box: BoundingBox

    def __post_init__(self) -> None:
        if self.class_id < 0:
            raise ValueError(f"class_id must be non-negative, got {self.class_id}")


@dataclass(frozen=True)
class Detection:
    class_id: int
    box: BoundingBox
    confidence: float

    def __post_init__(self) -> None:
        if self.class_id < 0:
            raise ValueError(f"class_id must be non-negative, got {self.class_id}")
        if not 0.0 <= self.confidence <= 1.0:
            raise ValueError(f"confidence must lie in [0, 1], got {self.confidence}")


@dataclass
class GridTensor:
    """Raw single-shot head output of shape ``(S, S, B, 5 + num_classes)``.

    Channels per box are ``x, y, w, h, conf, class_0 .. class_{C-1}``; ``x, y``
    are relative to the owning cell, ``w, h`` to the whole image.
    """

    s: int
    b: int
    num_classes: int
    values: np.ndarray

    def __post_init__(self) -> None:
        if self.s < 1 or self.b < 1 or self.num_classes < 1:
            raise ValueError("s, b and num_classes must be positive")
        values = np.asarray(self.values, dtype=np.float64)
        expected = self.s * self.s * self.b * (NUM_BOX_CHANNELS + self.num_classes)
        if values.size != expected:
            raise ValueError(
                f"tensor has {values.size} values, expected {expected} "
                f"for S={self.s} B={self.b} C={self.num_classes}"
            )
        self.values = values.reshape(self.shape)

    @property
    def shape(self) -> tuple[int, int, int, int]:
        return (self.s, self.s, self.b, NUM_BOX_CHANNELS + self.num_classes)

    @property
    def channels(self) -> int:
        return NUM_BOX_CHANNELS + self.num_classes

    def flat(self) -> np.ndarray:
        return self.values.reshape(-1)

    def check_ranges(self) -> None:
        """Raise ``ValueError`` if any channel falls outside ``[0, 1]``."""
        v = self.values
        bad = ~np.isfinite(v) | (v < 0.0) | (v > 1.0)
        if bad.any():
            i, j, k, ch = (int(n) for n in np.argwhere(bad)[0])
            raise ValueError(
                f"channel {ch} of box (row {i}, col {j}, box {k}) out of range: {v[i, j, k, ch]!r}"
            )


def to_corners(box: BoundingBox) -> tuple[float, float, float, float]:
    return (
        box.cx - box.w / 2,
        box.cy - box.h / 2,
        box.cx + box.w / 2,
        box.cy + box.h / 2,
    )


def from_corners(x1: float, y1: float, x2: float, y2: float) -> BoundingBox:
    if x2 < x1 or y2 < y1:
        raise ValueError(f"inverted corners ({x1}, {y1})-({x2}, {y2})")
    return BoundingBox((x1 + x2) / 2, (y1 + y2) / 2, x2 - x1, y2 - y1)


def corner_iou(a: tuple[float, float, float, float], b: tuple[float, float, float, float]) -> float:
    """IoU of two ``(x1, y1, x2, y2)`` boxes in any common unit."""
    iw = min(a[2], b[2]) - max(a[0], b[0])
    ih = min(a[3], b[3]) - max(a[1], b[1])
    inter = max(iw, 0.0) * max(ih, 0.0)
    union = (a[2] - a[0]) * (a[3] - a[1]) + (b[2] - b[0]) * (b[3] - b[1]) - inter
    if union <= 0.0:
        return 0.0
    return min(max(inter / union, 0.0), 1.0)


def iou(a: BoundingBox, b: BoundingBox) -> float:
    """Intersection over union; 0 when both boxes are degenerate."""
    return corner_iou(to_corners(a), to_corners(b))


def clip_to_unit(box: BoundingBox) -> BoundingBox:
    x1, y1, x2, y2 = to_corners(box)
    x1, x2 = min(max(x1, 0.0), 1.0), min(max(x2, 0.0), 1.0)
    y1, y2 = min(max(y1, 0.0), 1.0), min(max(y2, 0.0), 1.0)
    if (x1, y1, x2, y2) == to_corners(box):
        return box
    return from_corners(x1, y1, x2, y2)


def decode_grid(t: GridTensor, conf_threshold: float) -> list[Detection]:
    """Turn a grid tensor into absolute detections, one per box above threshold.

    Each box is labelled with its argmax class and scored
    ``conf * max(class_probs)``; output follows ``(row, col, box)`` order.
    """
    t.check_ranges()
    v = t.values
    probs = v[..., NUM_BOX_CHANNELS:]
    cls = probs.argmax(axis=-1)
    scores = v[..., 4] * probs.max(axis=-1)
    rows, cols, ks = np.nonzero(scores > conf_threshold)
    out = []
    for i, j, k in zip(rows.tolist(), cols.tolist(), ks.tolist()):
        x, y, w, h = v[i, j, k, :4].tolist()
        box = BoundingBox((j + x) / t.s, (i + y) / t.s, w, h)
        out.append(Detection(int(cls[i, j, k]), box, float(scores[i, j, k])))
    return out
