"""Rotated-IoU detection evaluation.

VOC-style matching of scored detections against oriented ground truth,
11-point (VOC07) and all-point (VOC12) average precision, and multi-
threshold mAP reports. Matching and accumulation are deterministic: score
ties break by image id, then input order.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import InvalidInputError
from .obb import OrientedBox, rotated_iou

VOC07 = "voc07"
VOC12 = "voc12"

# The ten thresholds averaged into mAP@0.50:0.95.
COCO_THRESHOLDS = tuple(round(0.5 + 0.05 * i, 2) for i in range(10))


@dataclass(frozen=True)
class GroundTruthRecord:
    """One annotated object tied to an image id."""

    image_id: str
    box: OrientedBox
    category: str
    difficult: bool = False


@dataclass(frozen=True)
class DetectionRecord:
    """One scored prediction tied to an image id."""

    image_id: str
    box: OrientedBox
    category: str
    score: float

    def __post_init__(self):
        if not math.isfinite(self.score) or not (0.0 <= self.score <= 1.0):
            raise InvalidInputError(f"score must lie in [0, 1], got {self.score}")


@dataclass(frozen=True)
class MatchResult:
    """Flags aligned with the input record order.

    A detection with neither flag set was absorbed by a difficult ground
    truth and is ignored by the PR accumulation.
    """

    tp: tuple[bool, ...]
    fp: tuple[bool, ...]
    gt_matched: tuple[bool, ...]


def _det_order(dets: Sequence[DetectionRecord]) -> list[int]:
    return sorted(range(len(dets)), key=lambda i: (-dets[i].score, dets[i].image_id, i))


def match_detections(dets: Sequence[DetectionRecord], gts: Sequence[GroundTruthRecord],
                     iou_threshold: float) -> MatchResult:
    """Greedy single-category matching at one IoU threshold.

    Detections are visited in descending score. Each one claims its
    best-IoU candidate among the same image's unmatched ground truths
    (difficult ground truths stay claimable and absorb without flags).
    A claim below the threshold, or no candidate at all, is a false
    positive.
    """
    if not (0.0 < iou_threshold <= 1.0):
        raise InvalidInputError(f"iou_threshold must lie in (0, 1], got {iou_threshold}")
    categories = {r.category for r in dets} | {r.category for r in gts}
    if len(categories) > 1:
        raise InvalidInputError(f"records span multiple categories: {sorted(categories)}")

    gt_by_image: dict[str, list[int]] = {}
    for gi, gt in enumerate(gts):
        gt_by_image.setdefault(gt.image_id, []).append(gi)

    tp = [False] * len(dets)
    fp = [False] * len(dets)
    matched = [False] * len(gts)
    for di in _det_order(dets):
        det = dets[di]
        best_iou, best_gi = 0.0, -1
        for gi in gt_by_image.get(det.image_id, ()):
            if matched[gi] and not gts[gi].difficult:
                continue
            iou = rotated_iou(det.box, gts[gi].box)
            if iou > best_iou:
                best_iou, best_gi = iou, gi
        if best_gi < 0 or best_iou < iou_threshold:
            fp[di] = True
        elif gts[best_gi].difficult:
            pass
        else:
            tp[di] = True
            matched[best_gi] = True
    return MatchResult(tuple(tp), tuple(fp), tuple(matched))


def average_precision(recall: Sequence[float], precision: Sequence[float], mode: str) -> float:
    """Average precision of a PR curve.

    VOC07 averages the best precision at recall levels 0, 0.1, ..., 1.0;
    VOC12 integrates the monotone envelope of the full curve.
    """
    rec = np.asarray(recall, dtype=float)
    prec = np.asarray(precision, dtype=float)
    if rec.shape != prec.shape or rec.ndim != 1:
        raise InvalidInputError("recall and precision must be equal-length vectors")
    if rec.size and np.any(np.diff(rec) < 0):
        raise InvalidInputError("recall must be non-decreasing")
    if mode not in (VOC07, VOC12):
        raise InvalidInputError(f"mode must be {VOC07!r} or {VOC12!r}, got {mode!r}")
    if rec.size == 0:
        return 0.0

    # fsum keeps the result independent of accumulation order
    if mode == VOC07:
        best = []
        # i / 10 is the closest double to each exact recall level; arange drifts
        for level in (i / 10.0 for i in range(11)):
            covered = rec >= level
            best.append(float(np.max(prec[covered])) if np.any(covered) else 0.0)
        return math.fsum(best) / 11.0

    mrec = np.concatenate(([0.0], rec, [1.0]))
    mpre = np.concatenate(([0.0], prec, [0.0]))
    for i in range(mpre.size - 1, 0, -1):
        mpre[i - 1] = max(mpre[i - 1], mpre[i])
    change = np.where(mrec[1:] != mrec[:-1])[0]
    return math.fsum((mrec[change + 1] - mrec[change]) * mpre[change + 1])


@dataclass(frozen=True)
class CategoryThresholdResult:
    """PR curve and counts for one (category, threshold) cell."""

    ap: float
    recall: tuple[float, ...]
    precision: tuple[float, ...]
    tp: int
    fp: int
    num_gt: int


@dataclass(frozen=True)
class EvalReport:
    mode: str
    thresholds: tuple[float, ...]
    categories: dict[str, dict[float, CategoryThresholdResult]]
    map_by_threshold: dict[float, float]
    map_50_95: float | None


def evaluate(gts: Sequence[GroundTruthRecord], dets: Sequence[DetectionRecord],
             iou_thresholds: Sequence[float], mode: str = VOC12) -> EvalReport:
    """Full evaluation over every category present in the ground truth.

    Categories with no ground truth are excluded; mAP at a threshold is the
    unweighted mean of category APs. mAP@0.50:0.95 is reported when all ten
    of its thresholds were requested. Thresholds are canonicalized to two
    decimals.
    """
    if mode not in (VOC07, VOC12):
        raise InvalidInputError(f"mode must be {VOC07!r} or {VOC12!r}, got {mode!r}")
    thresholds = tuple(sorted({round(float(t), 2) for t in iou_thresholds}))
    if not thresholds:
        raise InvalidInputError("at least one IoU threshold is required")
    for t in thresholds:
        if not (0.0 < t <= 1.0):
            raise InvalidInputError(f"iou threshold must lie in (0, 1], got {t}")

    categories = sorted({g.category for g in gts})
    dets_by_cat: dict[str, list[DetectionRecord]] = {c: [] for c in categories}
    for det in dets:
        if det.category in dets_by_cat:
            dets_by_cat[det.category].append(det)
    gts_by_cat: dict[str, list[GroundTruthRecord]] = {c: [] for c in categories}
    for gt in gts:
        gts_by_cat[gt.category].append(gt)

    per_category: dict[str, dict[float, CategoryThresholdResult]] = {}
    for cat in categories:
        cat_dets = dets_by_cat[cat]
        cat_gts = gts_by_cat[cat]
        num_gt = sum(1 for g in cat_gts if not g.difficult)
        order = _det_order(cat_dets)
        cells: dict[float, CategoryThresholdResult] = {}
        for thr in thresholds:
            result = match_detections(cat_dets, cat_gts, thr)
            tp_cum = fp_cum = 0
            rec, prec = [], []
            for di in order:
                if result.tp[di]:
                    tp_cum += 1
                elif result.fp[di]:
                    fp_cum += 1
                else:
                    continue
                rec.append(tp_cum / num_gt if num_gt else 0.0)
                prec.append(tp_cum / (tp_cum + fp_cum))
            ap = average_precision(rec, prec, mode) if num_gt else 0.0
            cells[thr] = CategoryThresholdResult(
                ap=ap, recall=tuple(rec), precision=tuple(prec),
                tp=tp_cum, fp=fp_cum, num_gt=num_gt)
        per_category[cat] = cells

    map_by_threshold = {
        thr: (math.fsum(per_category[c][thr].ap for c in categories) / len(categories)
              if categories else 0.0)
        for thr in thresholds
    }
    map_50_95 = None
    if all(t in map_by_threshold for t in COCO_THRESHOLDS):
        map_50_95 = math.fsum(map_by_threshold[t] for t in COCO_THRESHOLDS) / len(COCO_THRESHOLDS)
    return EvalReport(mode=mode, thresholds=thresholds, categories=per_category,
                      map_by_threshold=map_by_threshold, map_50_95=map_50_95)
