# analysis/metrics.py
"""BEV detection metrics: greedy matching, all-point interpolated AP and translation error."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Dict, List, Sequence, Tuple

import numpy as np

from domain.boxes import Box3D, Detection
from domain.geometry import bev_iou, bev_iou_matrix, center_distance

__all__ = [
    "bev_iou",
    "ClassMatch",
    "match_class",
    "interpolated_ap",
    "average_precision",
    "mean_ap",
    "per_class_matches",
    "mean_translation_error",
]

Frames = Sequence[Tuple[Sequence[Detection], Sequence[Box3D]]]


@dataclass
class ClassMatch:
    """Ranked true/false positive flags for one class over all frames."""

    n_gt: int
    scores: List[float] = field(default_factory=list)
    tp: List[bool] = field(default_factory=list)
    distances: List[float] = field(default_factory=list)  # centre distance of each TP


def _box_key(box: Box3D) -> tuple:
    return (*box.center, *box.size, box.yaw, box.class_id, *box.velocity)


def _same_class_iou(dets: Sequence[Detection], gt: Sequence[Box3D]) -> np.ndarray:
    """IoU matrix with pairs of different classes set to -1 (never a match)."""
    iou = bev_iou_matrix([d.box for d in dets], list(gt))
    same = np.array([[d.class_id == b.class_id for b in gt] for d in dets], dtype=bool)
    return np.where(same.reshape(iou.shape), iou, -1.0)


def match_class(frames: Frames, iou_threshold: float = 0.5) -> ClassMatch:
    """Greedy matching by descending score.

    Equal scores are ranked by frame, then by the detected box's fields, so
    the result does not depend on the order detections are listed in. Each
    detection takes the unmatched ground-truth box of its frame and class with
    the highest IoU, and counts as a true positive when that IoU reaches the
    threshold.
    """
    ranked = []
    for f, (dets, _) in enumerate(frames):
        ranked.extend((d.score, f, _box_key(d.box), i) for i, d in enumerate(dets))
    ranked.sort(key=lambda r: (-r[0], r[1], r[2]))
    ious = [_same_class_iou(dets, gt) for dets, gt in frames]
    taken = [np.zeros(len(gt), dtype=bool) for _, gt in frames]
    match = ClassMatch(n_gt=sum(len(gt) for _, gt in frames))
    for score, f, _, i in ranked:
        match.scores.append(score)
        row = np.where(taken[f], -1.0, ious[f][i]) if len(taken[f]) else np.zeros(0)
        best = int(np.argmax(row)) if row.size else -1
        hit = best >= 0 and row[best] >= iou_threshold
        match.tp.append(bool(hit))
        if hit:
            taken[f][best] = True
            det_box, gt_box = frames[f][0][i].box, frames[f][1][best]
            match.distances.append(center_distance(det_box, gt_box))
    return match


def interpolated_ap(tp: Sequence[bool], n_gt: int) -> float:
    """Area under the precision/recall curve with precision made monotone from the right."""
    if n_gt == 0:
        return math.nan
    if not len(tp):
        return 0.0
    hits = np.asarray(tp, dtype=np.float64)
    tp_cum = np.cumsum(hits)
    recall = tp_cum / n_gt
    precision = tp_cum / np.arange(1, len(hits) + 1)
    mrec = np.concatenate([[0.0], recall, [1.0]])
    mpre = np.concatenate([[0.0], precision, [0.0]])
    mpre = np.maximum.accumulate(mpre[::-1])[::-1]
    steps = np.flatnonzero(mrec[1:] != mrec[:-1])
    return float(np.sum((mrec[steps + 1] - mrec[steps]) * mpre[steps + 1]))


def average_precision(
    detections: Sequence[Detection], gt: Sequence[Box3D], iou_threshold: float = 0.5
) -> float:
    """AP of one frame's detections against its ground truth.

    All classes share one ranking; a detection only matches ground truth of
    its own class.
    """
    match = match_class([(detections, gt)], iou_threshold)
    return interpolated_ap(match.tp, match.n_gt)


def _class_frames(frames: Frames, class_id: int) -> list:
    return [
        ([d for d in dets if d.class_id == class_id], [b for b in gt if b.class_id == class_id])
        for dets, gt in frames
    ]


def per_class_matches(
    frames: Frames, class_ids: Sequence[int], iou_threshold: float = 0.5
) -> Dict[int, ClassMatch]:
    return {c: match_class(_class_frames(frames, c), iou_threshold) for c in class_ids}


def mean_ap(matches: Dict[int, ClassMatch]) -> Tuple[Dict[int, float], float]:
    """Per-class AP for classes with ground truth, and their mean (0 when none have any)."""
    aps = {c: interpolated_ap(m.tp, m.n_gt) for c, m in matches.items() if m.n_gt > 0}
    return aps, float(np.mean(list(aps.values()))) if aps else 0.0


def mean_translation_error(matches: Dict[int, ClassMatch]) -> float:
    """Mean BEV centre distance over all true positives; NaN without any."""
    distances = [d for m in matches.values() for d in m.distances]
    return float(np.mean(distances)) if distances else math.nan

