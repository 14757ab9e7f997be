"""Confidence scoring, score filtering and greedy non-maximum suppression."""

from __future__ import annotations

from typing import Sequence

from .geometry import Detection, iou

DEFAULT_NMS_IOU = 0.5


def confidence_score(p_object: float, iou_value: float) -> float:
    """Box confidence as objectness probability times localization IoU."""
    if not (0.0 <= p_object <= 1.0 and 0.0 <= iou_value <= 1.0):
        raise ValueError(f"inputs must lie in [0, 1], got {p_object}, {iou_value}")
    return p_object * iou_value


def filter_by_score(dets: Sequence[Detection], score_threshold: float) -> list[Detection]:
    return [d for d in dets if d.confidence > score_threshold]


def nms_indices(dets: Sequence[Detection], iou_threshold: float, class_aware: bool = True) -> list[int]:
    """Indices of kept detections, in emission order.

    Ties in confidence go to the lower input index, so the kept set does not
    depend on how the input happens to be ordered.
    """
    order = sorted(range(len(dets)), key=lambda i: (-dets[i].confidence, i))
    suppressed = [False] * len(dets)
    keep = []
    for pos, i in enumerate(order):
        if suppressed[i]:
            continue
        keep.append(i)
        for j in order[pos + 1:]:
            if suppressed[j]:
                continue
            if class_aware and dets[j].class_id != dets[i].class_id:
                continue
            if iou(dets[i].box, dets[j].box) > iou_threshold:
                suppressed[j] = True
    return keep


def nms(dets: Sequence[Detection], iou_threshold: float = DEFAULT_NMS_IOU, class_aware: bool = True) -> list[Detection]:
    return [dets[i] for i in nms_indices(dets, iou_threshold, class_aware)]
