"""Image augmentation with consistent bounding-box updates.

Every transform takes and returns ``(ImageBuffer, boxes)`` except
``color_jitter``, which leaves geometry alone. Resampling is nearest-neighbor
throughout so results are bit-exact.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .geometry import BoundingBox, GroundTruthBox, from_corners

ROTATION_RANGE = math.pi / 6  # +/- 30 degrees
DEFAULT_RETENTION = 0.25
LUMA = np.array([0.299, 0.587, 0.114])


@dataclass
class ImageBuffer:
    """Pixels in ``[0, 1]`` stored as an ``(height, width, channels)`` array."""

    pixels: np.ndarray

    def __post_init__(self) -> None:
        px = np.asarray(self.pixels, dtype=np.float64)
        if px.ndim == 2:
            px = px[:, :, None]
        if px.ndim != 3 or px.shape[2] not in (1, 3):
            raise ValueError(f"expected (H, W, 1|3) pixels, got shape {px.shape}")
        if px.shape[0] < 1 or px.shape[1] < 1:
            raise ValueError("image must be at least 1x1")
        if not np.all((px >= 0.0) & (px <= 1.0)):
            raise ValueError("pixel values must lie in [0, 1]")
        self.pixels = px

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def channels(self) -> int:
        return self.pixels.shape[2]

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, ImageBuffer):
            return NotImplemented
        return self.pixels.shape == other.pixels.shape and bool(np.array_equal(self.pixels, other.pixels))


@dataclass(frozen=True)
class AugmentationSpec:
    theta: float = 0.0
    scale: float = 1.0
    hflip: bool = False
    brightness: float = 1.0
    contrast: float = 1.0
    saturation: float = 1.0
    min_box_retention: float = DEFAULT_RETENTION

    def __post_init__(self) -> None:
        if not self.scale > 0:
            raise ValueError(f"scale must be positive, got {self.scale}")
        if not self.brightness > 0:
            raise ValueError(f"brightness must be positive, got {self.brightness}")
        if not self.contrast > 0:
            raise ValueError(f"contrast must be positive, got {self.contrast}")
        if not self.saturation >= 0:
            raise ValueError(f"saturation must be non-negative, got {self.saturation}")
        if not 0 < self.min_box_retention <= 1:
            raise ValueError(f"min_box_retention must lie in (0, 1], got {self.min_box_retention}")


def sample_theta(rng: np.random.Generator) -> float:
    """Draw a rotation angle uniformly from the +/-30 degree range."""
    return float(rng.uniform(-ROTATION_RANGE, ROTATION_RANGE))


def _rotate_point(x: float, y: float, cx: float, cy: float, cos_t: float, sin_t: float) -> tuple[float, float]:
    dx, dy = x - cx, y - cy
    return cx + cos_t * dx - sin_t * dy, cy + sin_t * dx + cos_t * dy


def rotate_box_hull(box: BoundingBox, theta: float, width: int, height: int) -> tuple[float, float, float, float]:
    """Axis-aligned hull of the box's rotated corners, in pixel units, unclipped.

    Rotation is about the image center with y pointing down, matching
    ``rotate``'s pixel mapping.
    """
    cos_t, sin_t = math.cos(theta), math.sin(theta)
    cx, cy = width / 2, height / 2
    x1, y1 = (box.cx - box.w / 2) * width, (box.cy - box.h / 2) * height
    x2, y2 = (box.cx + box.w / 2) * width, (box.cy + box.h / 2) * height
    pts = [_rotate_point(x, y, cx, cy, cos_t, sin_t) for x, y in ((x1, y1), (x2, y1), (x2, y2), (x1, y2))]
    xs = [p[0] for p in pts]
    ys = [p[1] for p in pts]
    return min(xs), min(ys), max(xs), max(ys)


def rotate(
    img: ImageBuffer,
    boxes: Sequence[GroundTruthBox],
    theta: float,
    min_box_retention: float = DEFAULT_RETENTION,
) -> tuple[ImageBuffer, list[GroundTruthBox]]:
    if theta == 0.0:
        return ImageBuffer(img.pixels.copy()), list(boxes)
    h, w = img.height, img.width
    cos_t, sin_t = math.cos(theta), math.sin(theta)
    # inverse mapping: each destination pixel center pulls from R(-theta)
    cx, cy = (w - 1) / 2, (h - 1) / 2
    ys, xs = np.mgrid[0:h, 0:w].astype(np.float64)
    dx, dy = xs - cx, ys - cy
    src_x = np.rint(cx + cos_t * dx + sin_t * dy)
    src_y = np.rint(cy - sin_t * dx + cos_t * dy)
    inside = (src_x >= 0) & (src_x <= w - 1) & (src_y >= 0) & (src_y <= h - 1)
    out = np.zeros_like(img.pixels)
    out[inside] = img.pixels[src_y[inside].astype(np.intp), src_x[inside].astype(np.intp)]

    kept = []
    for gt in boxes:
        hx1, hy1, hx2, hy2 = rotate_box_hull(gt.box, theta, w, h)
        x1, x2 = min(max(hx1, 0.0), w), min(max(hx2, 0.0), w)
        y1, y2 = min(max(hy1, 0.0), h), min(max(hy2, 0.0), h)
        clipped = max(x2 - x1, 0.0) * max(y2 - y1, 0.0)
        original = gt.box.area * w * h
        if clipped < min_box_retention * original:
            continue
        x2, y2 = max(x2, x1), max(y2, y1)
        kept.append(GroundTruthBox(gt.class_id, from_corners(x1 / w, y1 / h, x2 / w, y2 / h)))
    return ImageBuffer(out), kept


def _round_half_up(v: float) -> int:
    return int(math.floor(v + 0.5))


def resize_nearest(pixels: np.ndarray, new_w: int, new_h: int) -> np.ndarray:
    h, w = pixels.shape[:2]
    rows = (np.arange(new_h) * h) // new_h
    cols = (np.arange(new_w) * w) // new_w
    return pixels[rows[:, None], cols[None, :]]


def scale(img: ImageBuffer, boxes: Sequence[GroundTruthBox], s: float) -> tuple[ImageBuffer, list[GroundTruthBox]]:
    if not s > 0:
        raise ValueError(f"scale factor must be positive, got {s}")
    new_w, new_h = _round_half_up(s * img.width), _round_half_up(s * img.height)
    if new_w < 1 or new_h < 1:
        raise ValueError(f"scale {s} shrinks {img.width}x{img.height} image to zero pixels")
    return ImageBuffer(resize_nearest(img.pixels, new_w, new_h)), list(boxes)


def hflip(img: ImageBuffer, boxes: Sequence[GroundTruthBox]) -> tuple[ImageBuffer, list[GroundTruthBox]]:
    flipped = [
        GroundTruthBox(gt.class_id, BoundingBox(1.0 - gt.box.cx, gt.box.cy, gt.box.w, gt.box.h)) for gt in boxes
    ]
    return ImageBuffer(img.pixels[:, ::-1, :].copy()), flipped


def color_jitter(img: ImageBuffer, b: float, c: float, s_sat: float) -> ImageBuffer:
    """Brightness, then contrast about the image mean, then saturation."""
    if not (b > 0 and c > 0 and s_sat >= 0):
        raise ValueError(f"invalid jitter parameters b={b} c={c} s={s_sat}")
    p = img.pixels
    if b != 1.0:
        p = np.clip(p * b, 0.0, 1.0)
    if c != 1.0:
        # constant images must be an exact fixed point; mean() can drift by an ulp
        m = p.flat[0] if p.min() == p.max() else p.mean()
        p = np.clip((p - m) * c + m, 0.0, 1.0)
    if s_sat != 1.0 and img.channels == 3:
        gray = (p @ LUMA)[:, :, None]
        p = np.clip(gray + s_sat * (p - gray), 0.0, 1.0)
    return ImageBuffer(p.copy() if p is img.pixels else p)


def compose(
    img: ImageBuffer, boxes: Sequence[GroundTruthBox], spec: AugmentationSpec
) -> tuple[ImageBuffer, list[GroundTruthBox]]:
    """Apply jitter, flip, scale and rotation in that order."""
    img = color_jitter(img, spec.brightness, spec.contrast, spec.saturation)
    boxes = list(boxes)
    if spec.hflip:
        img, boxes = hflip(img, boxes)
    img, boxes = scale(img, boxes, spec.scale)
    if spec.theta != 0.0:
        img, boxes = rotate(img, boxes, spec.theta, spec.min_box_retention)
    return img, boxes
