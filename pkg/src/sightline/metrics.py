"""Detection matching and the precision/recall/AP/mAP metric stack."""

from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass
from typing import Iterable, Sequence

from .geometry import Detection, GroundTruthBox, iou


@dataclass(frozen=True)
class ConfusionCounts:
    tp: int = 0
    fp: int = 0
    fn_: int = 0
    tn: int = 0

    def __post_init__(self) -> None:
        if min(self.tp, self.fp, self.fn_, self.tn) < 0:
            raise ValueError(f"counts must be non-negative: {self}")

    def __add__(self, other: ConfusionCounts) -> ConfusionCounts:
        return ConfusionCounts(self.tp + other.tp, self.fp + other.fp, self.fn_ + other.fn_, self.tn + other.tn)


@dataclass(frozen=True)
class PRPoint:
    threshold: float
    precision: float
    recall: float


@dataclass(frozen=True)
class MetricsRow:
    iou_threshold: float
    precision: float
    recall: float
    f1: float
    map_value: float


@dataclass(frozen=True)
class MatchResult:
    counts: ConfusionCounts
    # aligned with the input detection order
    flags: tuple[bool, ...]
    matched_gt: tuple[int | None, ...]


def match(dets: Sequence[Detection], gts: Sequence[GroundTruthBox], iou_threshold: float) -> MatchResult:
    """Greedy confidence-ordered matching of detections to ground truth.

    Each detection, highest confidence first, claims the unmatched same-class
    ground truth with the largest IoU, provided that IoU reaches the threshold.
    """
    order = sorted(range(len(dets)), key=lambda i: (-dets[i].confidence, i))
    taken = [False] * len(gts)
    matched: list[int | None] = [None] * len(dets)
    for i in order:
        d = dets[i]
        best, best_iou = None, -1.0
        for g, gt in enumerate(gts):
            if taken[g] or gt.class_id != d.class_id:
                continue
            ov = iou(d.box, gt.box)
            if ov >= iou_threshold and ov > best_iou:
                best, best_iou = g, ov
        if best is not None:
            taken[best] = True
            matched[i] = best
    tp = sum(m is not None for m in matched)
    counts = ConfusionCounts(tp=tp, fp=len(dets) - tp, fn_=len(gts) - tp)
    return MatchResult(counts, tuple(m is not None for m in matched), tuple(matched))


def precision(c: ConfusionCounts) -> float:
    denom = c.tp + c.fp
    return c.tp / denom if denom else 0.0


def recall(c: ConfusionCounts) -> float:
    denom = c.tp + c.fn_
    return c.tp / denom if denom else 0.0


def f1(p: float, r: float) -> float:
    return 2 * p * r / (p + r) if p + r > 0 else 0.0


def accuracy(c: ConfusionCounts) -> float:
    total = c.tp + c.tn + c.fp + c.fn_
    if total == 0:
        raise ValueError("accuracy is undefined for all-zero counts")
    return (c.tp + c.tn) / total


def pr_curve(scored: Iterable[tuple[float, bool]], num_gt: int) -> list[PRPoint]:
    """Cumulative precision/recall as the confidence cut sweeps downward.

    ``scored`` holds ``(confidence, is_true_positive)`` pairs. One point is
    emitted per distinct confidence, counting every detection at or above it.
    """
    if num_gt < 0:
        raise ValueError(f"num_gt must be non-negative, got {num_gt}")
    items = sorted(scored, key=lambda x: -x[0])
    points = []
    tp = fp = 0
    for n, (conf, hit) in enumerate(items):
        tp += bool(hit)
        fp += not hit
        if n + 1 < len(items) and items[n + 1][0] == conf:
            continue
        points.append(PRPoint(conf, tp / (tp + fp), tp / num_gt if num_gt else 0.0))
    return points


def average_precision(curve: Sequence[PRPoint]) -> float:
    """All-points interpolated AP: area under the monotone precision envelope."""
    if not curve:
        return 0.0
    pts = sorted(curve, key=lambda p: p.recall)
    ap = 0.0
    envelope = 0.0
    # walk from the highest recall down, carrying the running max precision
    for k in range(len(pts) - 1, -1, -1):
        envelope = max(envelope, pts[k].precision)
        prev_recall = pts[k - 1].recall if k > 0 else 0.0
        ap += (pts[k].recall - prev_recall) * envelope
    return ap


def map_over_images(
    images: Sequence[tuple[Sequence[Detection], Sequence[GroundTruthBox]]],
    thresholds: Sequence[float],
    num_classes: int,
) -> tuple[list[MetricsRow], dict[float, dict[int, float]]]:
    """Metrics rows per IoU threshold plus per-class AP, over many images.

    Images are matched independently and their counts and scored detections
    pooled, so the result does not depend on image order.
    """
    rows = []
    per_class_ap: dict[float, dict[int, float]] = {}
    gt_per_class: dict[int, int] = defaultdict(int)
    for _, gts in images:
        for gt in gts:
            gt_per_class[gt.class_id] += 1
    for thr in thresholds:
        if not 0.0 <= thr <= 1.0:
            raise ValueError(f"IoU threshold must lie in [0, 1], got {thr}")
        total = ConfusionCounts()
        scored: dict[int, list[tuple[float, bool]]] = defaultdict(list)
        for dets, gts in images:
            m = match(dets, gts, thr)
            total = total + m.counts
            for d, hit in zip(dets, m.flags):
                scored[d.class_id].append((d.confidence, hit))
        aps = {
            c: average_precision(pr_curve(scored.get(c, []), gt_per_class[c]))
            for c in range(num_classes)
            if gt_per_class.get(c, 0) > 0
        }
        per_class_ap[thr] = aps
        map_value = sum(aps.values()) / len(aps) if aps else 0.0
        p, r = precision(total), recall(total)
        rows.append(MetricsRow(thr, p, r, f1(p, r), map_value))
    return rows, per_class_ap


def map_over_thresholds(
    dets: Sequence[Detection],
    gts: Sequence[GroundTruthBox],
    thresholds: Sequence[float],
    num_classes: int,
) -> list[MetricsRow]:
    rows, _ = map_over_images([(dets, gts)], thresholds, num_classes)
    return rows


def binary_image_confusion(labels: Sequence[tuple[str, str]], positive_class: str) -> ConfusionCounts:
    """Tally ``(predicted, actual)`` image labels into a 2x2 confusion matrix."""
    if not labels:
        raise ValueError("no labels to tally")
    tp = fp = fn_ = tn = 0
    for predicted, actual in labels:
        pred_pos = predicted == positive_class
        act_pos = actual == positive_class
        if pred_pos and act_pos:
            tp += 1
        elif pred_pos:
            fp += 1
        elif act_pos:
            fn_ += 1
        else:
            tn += 1
    return ConfusionCounts(tp, fp, fn_, tn)
