"""Preprocessing, dataset evaluation and the post-processing throughput bench."""

from __future__ import annotations

import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .augment import ImageBuffer, resize_nearest
from .geometry import NUM_BOX_CHANNELS, Detection, GridTensor, GroundTruthBox, decode_grid
from .ingest import DatasetManifest, ParseError, parse_detections, parse_labels
from .metrics import MetricsRow, PRPoint, map_over_images, match, pr_curve
from .postprocess import filter_by_score, nms

TABLE_THRESHOLDS = (0.50, 0.55, 0.60, 0.65, 0.70)
WARMUP_RUNS = 3


@dataclass(frozen=True)
class PreprocessSpec:
    target_width: int = 640
    target_height: int = 640
    mu: float = 0.0
    sigma: float = 1.0

    def __post_init__(self) -> None:
        if not self.sigma > 0:
            raise ValueError(f"sigma must be positive, got {self.sigma}")
        if self.target_width < 1 or self.target_height < 1:
            raise ValueError("target dimensions must be at least 1 px")


def preprocess(img: ImageBuffer, spec: PreprocessSpec) -> np.ndarray:
    """Resize (nearest) then standardize; returns a planar ``(C, H, W)`` array."""
    px = img.pixels
    if (img.width, img.height) != (spec.target_width, spec.target_height):
        px = resize_nearest(px, spec.target_width, spec.target_height)
    return ((px - spec.mu) / spec.sigma).transpose(2, 0, 1)


# -- evaluation ----------------------------------------------------------------


@dataclass
class EvaluationReport:
    class_names: tuple[str, ...]
    rows: list[MetricsRow]
    pr: list[PRPoint]
    per_class_ap: dict[float, dict[int, float]]

    def metrics_csv(self) -> str:
        lines = ["iou_threshold,precision,recall,f1,map"]
        for r in self.rows:
            lines.append(f"{r.iou_threshold:.6f},{r.precision:.6f},{r.recall:.6f},{r.f1:.6f},{r.map_value:.6f}")
        return "\n".join(lines) + "\n"

    def pr_csv(self) -> str:
        lines = ["threshold,precision,recall"]
        lines += [f"{p.threshold:.6f},{p.precision:.6f},{p.recall:.6f}" for p in self.pr]
        return "\n".join(lines) + "\n"

    def per_class_csv(self) -> str:
        lines = ["iou_threshold,class_id,class_name,ap"]
        for thr, aps in self.per_class_ap.items():
            for c, ap in sorted(aps.items()):
                lines.append(f"{thr:.6f},{c},{self.class_names[c]},{ap:.6f}")
        return "\n".join(lines) + "\n"


def _read(path: Path) -> bytes:
    try:
        return path.read_bytes()
    except OSError as e:
        raise ParseError(f"cannot read file: {e.strerror}", path=str(path), offset=0) from None


def _load_item(item, num_classes: int, score_cut: float, nms_iou: float):
    if not item.image.is_file():
        raise ParseError("image file not found", path=str(item.image), offset=0)
    try:
        gts = parse_labels(_read(item.labels), num_classes)
    except ParseError as e:
        raise ParseError(e.reason, e.line, e.offset, str(item.labels), e.field) from None
    dets: list[Detection] = []
    if item.detections is not None:
        try:
            dets = parse_detections(_read(item.detections), num_classes)
        except ParseError as e:
            raise ParseError(e.reason, e.line, e.offset, str(item.detections), e.field) from None
    dets = nms(filter_by_score(dets, score_cut), nms_iou, class_aware=True)
    return dets, gts


def load_dataset(
    manifest: DatasetManifest, score_cut: float = 0.0, nms_iou: float = 0.5, jobs: int = 1
) -> list[tuple[list[Detection], list[GroundTruthBox]]]:
    """Parse, score-filter and suppress every item; results keep manifest order."""
    if not manifest.items:
        raise ValueError("dataset has no items")
    args = [(it, manifest.num_classes, score_cut, nms_iou) for it in manifest.items]
    if jobs <= 1:
        return [_load_item(*a) for a in args]
    with ThreadPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(lambda a: _load_item(*a), args))


def evaluate_images(
    images: Sequence[tuple[Sequence[Detection], Sequence[GroundTruthBox]]],
    class_names: Sequence[str],
    thresholds: Sequence[float] = TABLE_THRESHOLDS,
) -> EvaluationReport:
    rows, per_class = map_over_images(images, thresholds, len(class_names))
    # the overall PR curve pools every class at the first (loosest) threshold
    scored = []
    num_gt = 0
    for dets, gts in images:
        m = match(dets, gts, thresholds[0])
        scored += [(d.confidence, hit) for d, hit in zip(dets, m.flags)]
        num_gt += len(gts)
    return EvaluationReport(tuple(class_names), rows, pr_curve(scored, num_gt), per_class)


def evaluate_dataset(
    manifest: DatasetManifest,
    thresholds: Sequence[float] = TABLE_THRESHOLDS,
    nms_iou: float = 0.5,
    score_cut: float = 0.0,
    jobs: int = 1,
) -> EvaluationReport:
    if not thresholds:
        raise ValueError("at least one IoU threshold is required")
    images = load_dataset(manifest, score_cut, nms_iou, jobs)
    return evaluate_images(images, manifest.class_names, thresholds)


# -- benchmark -----------------------------------------------------------------


@dataclass(frozen=True)
class BenchRow:
    width: int
    height: int
    iterations: int
    mean_ms: float
    p50_ms: float
    p95_ms: float
    fps: float
    kept: int


@dataclass
class BenchReport:
    rows: list[BenchRow]

    def to_csv(self) -> str:
        lines = ["width,height,iterations,mean_ms,p50_ms,p95_ms,fps"]
        for r in self.rows:
            lines.append(
                f"{r.width},{r.height},{r.iterations},{r.mean_ms:.6f},{r.p50_ms:.6f},{r.p95_ms:.6f},{r.fps:.6f}"
            )
        return "\n".join(lines) + "\n"


def synthetic_grid(
    num_boxes: int, rng: np.random.Generator, min_s: int = 20, b: int = 2, num_classes: int = 2
) -> GridTensor:
    """Grid with exactly ``num_boxes`` confident, mutually disjoint boxes.

    Confident boxes sit one per cell, centered, sized to half a cell; every
    other predictor gets confidence below 0.1.
    """
    s = max(min_s, math.ceil(math.sqrt(max(num_boxes, 1))))
    values = rng.uniform(0.0, 1.0, size=(s, s, b, NUM_BOX_CHANNELS + num_classes))
    values[..., 4] *= 0.1
    cells = rng.permutation(s * s)[:num_boxes]
    for cell in cells.tolist():
        i, j = divmod(cell, s)
        values[i, j, 0, :4] = (0.5, 0.5, 0.5 / s, 0.5 / s)
        values[i, j, 0, 4] = 1.0
        values[i, j, 0, NUM_BOX_CHANNELS:] = 0.0
        values[i, j, 0, NUM_BOX_CHANNELS + int(rng.integers(num_classes))] = 1.0
    return GridTensor(s, b, num_classes, values)


def bench_frame(
    img: ImageBuffer, grid: GridTensor, spec: PreprocessSpec, conf_threshold: float, nms_iou: float
) -> list[Detection]:
    preprocess(img, spec)
    return nms(decode_grid(grid, conf_threshold), nms_iou)


def bench(
    resolutions: Sequence[tuple[int, int]],
    iterations: int,
    synthetic_boxes: int,
    seed: int = 0,
    nms_iou: float = 0.5,
    conf_threshold: float = 0.5,
    mu: float = 0.5,
    sigma: float = 0.25,
) -> BenchReport:
    """Time preprocess + decode + NMS per frame at each input resolution.

    Each frame is preprocessed at its own resolution and decoded from a grid
    with one cell per 32 px (stride-32 head). Three warm-up frames are run
    first and excluded. Timings use the monotonic performance counter.
    """
    if iterations < 10:
        raise ValueError(f"iterations must be at least 10, got {iterations}")
    rows = []
    for w, h in resolutions:
        spec = PreprocessSpec(w, h, mu, sigma)
        rng = np.random.default_rng([seed, w, h])
        img = ImageBuffer(rng.uniform(0.0, 1.0, size=(h, w, 3)))
        grid = synthetic_grid(synthetic_boxes, rng, min_s=max(1, max(w, h) // 32))
        for _ in range(WARMUP_RUNS):
            kept = bench_frame(img, grid, spec, conf_threshold, nms_iou)
        times = np.empty(iterations)
        for n in range(iterations):
            t0 = time.perf_counter()
            kept = bench_frame(img, grid, spec, conf_threshold, nms_iou)
            times[n] = (time.perf_counter() - t0) * 1000.0
        mean = max(float(times.mean()), 1e-9)
        rows.append(
            BenchRow(
                w, h, iterations, mean,
                float(np.percentile(times, 50)), float(np.percentile(times, 95)),
                1000.0 / mean, len(kept),
            )
        )
    return BenchReport(rows)
