"""Box overlap, unknown-object matching (UDR/UDP) and known-class mAP."""

from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .core import BoundingBox, ObjectRecord, TaskSplit


@dataclass(frozen=True)
class UnknownMatchCounts:
    tp_u: int
    fn_star_u: int
    fn_u: int

    def __post_init__(self):
        if min(self.tp_u, self.fn_star_u, self.fn_u) < 0:
            raise ValueError("counts must be non-negative")
        if self.fn_star_u > self.fn_u:
            raise ValueError("fn_star_u must not exceed fn_u")


@dataclass(frozen=True)
class UnknownMatching:
    """Full result of unknown matching; ``counts`` is what UDR/UDP need."""

    pairs: tuple[tuple[str, str], ...]  # (detection object_id, gt object_id)
    missed: tuple[str, ...]  # gt ids unmatched by unknown-tagged detections
    covered_by_known: tuple[str, ...]  # subset of missed hit by a known-tagged detection

    @property
    def counts(self) -> UnknownMatchCounts:
        return UnknownMatchCounts(len(self.pairs), len(self.covered_by_known), len(self.missed))


@dataclass(frozen=True)
class DetectionScores:
    udr: float | None = None
    udp: float | None = None
    map_previous: float | None = None
    map_current: float | None = None


def iou(a: BoundingBox, b: BoundingBox) -> float:
    ix = max(0.0, min(a.x + a.w, b.x + b.w) - max(a.x, b.x))
    iy = max(0.0, min(a.y + a.h, b.y + b.h) - max(a.y, b.y))
    inter = ix * iy
    if inter <= 0.0:
        return 0.0
    union = a.area + b.area - inter
    return min(1.0, inter / union)


def _by_image(records: Iterable[ObjectRecord]) -> dict[str, list[ObjectRecord]]:
    out: dict[str, list[ObjectRecord]] = defaultdict(list)
    for r in records:
        out[r.image_id].append(r)
    return out


def _ranked(detections: Iterable[ObjectRecord]) -> list[ObjectRecord]:
    # descending score, ties by object_id
    return sorted(detections, key=lambda d: (-d.score, d.object_id))


def _greedy_match(detections: Sequence[ObjectRecord], gt: Sequence[ObjectRecord], iou_thresh: float):
    """Match ranked detections to ground truth one-to-one within each image.

    Each detection takes the still-unmatched GT box with the largest IoU above
    the threshold; IoU ties go to the earlier GT. Returns a list aligned with
    ``detections`` holding the matched GT record or None.
    """
    gt_by_image = _by_image(gt)
    used: dict[str, list[bool]] = {img: [False] * len(g) for img, g in gt_by_image.items()}
    result = []
    for det in detections:
        candidates = gt_by_image.get(det.image_id, ())
        best, best_iou = -1, iou_thresh
        for j, g in enumerate(candidates):
            if used[det.image_id][j]:
                continue
            o = iou(det.box, g.box)
            if o > best_iou:
                best, best_iou = j, o
        if best >= 0:
            used[det.image_id][best] = True
            result.append(candidates[best])
        else:
            result.append(None)
    return result


def unknown_matching(
    detections: Iterable[ObjectRecord],
    gt_unknown: Iterable[ObjectRecord],
    iou_thresh: float = 0.5,
) -> UnknownMatching:
    detections = list(detections)
    gt_unknown = list(gt_unknown)
    if not 0.0 < iou_thresh < 1.0:
        raise ValueError("iou_thresh must lie in (0, 1)")
    unk = _ranked(d for d in detections if d.tag.is_unknown)
    known = [d for d in detections if d.tag.is_known]

    matched = _greedy_match(unk, gt_unknown, iou_thresh)
    pairs = tuple((d.object_id, g.object_id) for d, g in zip(unk, matched) if g is not None)
    hit = {g for _, g in pairs}
    missed = [g for g in gt_unknown if g.object_id not in hit]

    known_by_image = _by_image(known)
    covered = tuple(
        g.object_id for g in missed
        if any(iou(k.box, g.box) > iou_thresh for k in known_by_image.get(g.image_id, ()))
    )
    return UnknownMatching(pairs, tuple(g.object_id for g in missed), covered)


def match_unknown(
    detections: Iterable[ObjectRecord],
    gt_unknown: Iterable[ObjectRecord],
    iou_thresh: float = 0.5,
) -> UnknownMatchCounts:
    """Count TP_u, FN*_u and FN_u for unknown-object detection.

    FN_u are ground-truth unknowns left unmatched by unknown-tagged
    detections; FN*_u is the part of FN_u overlapped by a known-tagged
    detection, so FN*_u <= FN_u always.
    """
    return unknown_matching(detections, gt_unknown, iou_thresh).counts


def match_detections(
    detections: Iterable[ObjectRecord],
    gt: Iterable[ObjectRecord],
    iou_thresh: float = 0.5,
) -> list[tuple[ObjectRecord, ObjectRecord]]:
    """Greedy one-to-one (detection, ground truth) pairs, ignoring class tags."""
    ranked = _ranked(detections)
    matched = _greedy_match(ranked, list(gt), iou_thresh)
    return [(d, g) for d, g in zip(ranked, matched) if g is not None]


def udr_udp(c: UnknownMatchCounts) -> tuple[float | None, float | None]:
    udr_den = c.tp_u + c.fn_u
    udp_den = c.tp_u + c.fn_star_u
    udr = (c.tp_u + c.fn_star_u) / udr_den if udr_den else None
    udp = c.tp_u / udp_den if udp_den else None
    return udr, udp


def _interpolated_ap(tp_flags: np.ndarray, group_ends: np.ndarray, n_gt: int) -> float:
    """All-point interpolated AP from per-detection TP flags.

    Precision/recall are read only at the last detection of each equal-score
    group, so tied detections count as a single operating point.
    """
    if tp_flags.size == 0:
        return 0.0
    tp = np.cumsum(tp_flags)[group_ends]
    n = (group_ends + 1).astype(np.float64)
    recall = tp / n_gt
    precision = tp / n
    mrec = np.concatenate(([0.0], recall))
    mpre = np.concatenate((precision, [0.0]))
    mpre = np.maximum.accumulate(mpre[::-1])[::-1][:-1]
    return float(np.sum((mrec[1:] - mrec[:-1]) * mpre))


def average_precision(
    detections: Iterable[ObjectRecord],
    gt: Iterable[ObjectRecord],
    class_id: int,
    iou_thresh: float = 0.5,
) -> float | None:
    """AP of one known class; None when the class has no ground truth."""
    gt_c = [g for g in gt if g.tag.is_known and g.tag.id == class_id]
    if not gt_c:
        return None
    dets = _ranked(d for d in detections if d.tag.is_known and d.tag.id == class_id)
    matched = _greedy_match(dets, gt_c, iou_thresh)
    flags = np.array([m is not None for m in matched], dtype=np.float64)
    scores = np.array([d.score for d in dets])
    if scores.size:
        group_ends = np.flatnonzero(np.append(scores[1:] != scores[:-1], True))
    else:
        group_ends = np.zeros(0, dtype=np.int64)
    return _interpolated_ap(flags, group_ends, len(gt_c))


def mean_ap(
    detections: Iterable[ObjectRecord],
    gt: Iterable[ObjectRecord],
    split: TaskSplit,
    iou_thresh: float = 0.5,
) -> tuple[float | None, float | None]:
    """(mAP over previously known classes, mAP over newly known classes)."""
    detections = list(detections)
    gt = list(gt)

    def group_mean(names):
        aps = []
        for name in names:
            ap = average_precision(detections, gt, split.class_id(name), iou_thresh)
            if ap is not None:
                aps.append(ap)
        return float(np.mean(aps)) if aps else None

    return group_mean(split.previous_known), group_mean(split.current_known)


def detection_scores(
    detections: Iterable[ObjectRecord],
    gt: Iterable[ObjectRecord],
    split: TaskSplit,
    iou_thresh: float = 0.5,
) -> DetectionScores:
    detections = list(detections)
    gt = list(gt)
    counts = match_unknown(detections, [g for g in gt if g.tag.is_unknown], iou_thresh)
    udr, udp = udr_udp(counts)
    prev, cur = mean_ap(detections, gt, split, iou_thresh)
    return DetectionScores(udr=udr, udp=udp, map_previous=prev, map_current=cur)
