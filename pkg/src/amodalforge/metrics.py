"""Occlusion-reasoning and segmentation-quality metrics.

Three families:

- Occlusion detection from area ratios. The ratio |modal ∩ amodal| / |amodal|
  is near 1 for unoccluded objects; a threshold on it is a classifier for
  "unoccluded", summarized by a precision/recall sweep and its average
  precision.
- Mask accuracy as a function of an IoU cutoff, with the area under that
  curve and the spot values at cutoffs 0.50 and 0.70.
- Detection + segmentation mAP^r with box-based assignment: predictions are
  matched to ground truths by bounding-box overlap, but correctness is judged
  by mask overlap. Ground truths lacking an amodal annotation absorb their
  assigned predictions without counting either way.

Average precision is always all-points interpolated: the precision envelope
(max precision at recall >= r) integrated over recall from 0. Evaluation
files are JSON lines, one record per line, with mask paths resolved relative
to the file's directory.
"""

from __future__ import annotations

import csv
import json
import math
import pathlib
from dataclasses import dataclass
from typing import Mapping, Optional, Sequence

import numpy as np

from .core import (
    BBox,
    BinaryMask,
    DimensionMismatchError,
    box_iou,
    dump_json,
    load_mask_png,
    mask_iou,
)


class EmptyAmodalMaskError(ValueError):
    """The area ratio is undefined when the amodal mask has no pixels."""


class NoPositivesError(ValueError):
    """The PR sweep needs at least one unoccluded sample."""


class EmptyInputError(ValueError):
    """The metric needs at least one element."""


@dataclass(frozen=True)
class AreaRatioSample:
    ratio: float
    occluded_truth: bool

    def __post_init__(self):
        if not 0.0 <= self.ratio <= 1.0:
            raise ValueError(f"ratio must be in [0, 1], got {self.ratio!r}")
        if not isinstance(self.occluded_truth, bool):
            raise ValueError(f"occluded_truth must be a bool, got {self.occluded_truth!r}")


@dataclass(frozen=True)
class PRCurve:
    points: tuple  # of (threshold, precision, recall), thresholds descending
    average_precision: float


@dataclass(frozen=True)
class AccuracyCurve:
    points: tuple  # of (cutoff, accuracy)
    auc: float
    acc_at_50: float
    acc_at_70: float


@dataclass(frozen=True)
class DetSegPrediction:
    category: str
    score: float
    box: BBox
    mask: BinaryMask

    def __post_init__(self):
        if not isinstance(self.category, str) or not self.category:
            raise ValueError("category must be a non-empty string")
        if not math.isfinite(self.score):
            raise ValueError(f"score must be finite, got {self.score!r}")
        if self.mask.count == 0:
            raise ValueError("prediction mask is empty")


@dataclass(frozen=True)
class GroundTruthInstance:
    category: str
    box: BBox
    amodal_mask: Optional[BinaryMask] = None

    def __post_init__(self):
        if not isinstance(self.category, str) or not self.category:
            raise ValueError("category must be a non-empty string")

    @property
    def annotated(self) -> bool:
        return self.amodal_mask is not None


@dataclass(frozen=True)
class MapReport:
    per_category: Mapping  # category -> AP
    mean_ap: float
    region_iou_cutoff: float


def area_ratio(modal: BinaryMask, amodal: BinaryMask) -> float:
    """|modal ∩ amodal| / |amodal|; close to 1 when nothing is hidden."""
    if modal.bits.shape != amodal.bits.shape:
        raise DimensionMismatchError(
            f"modal {modal.bits.shape} vs amodal {amodal.bits.shape}"
        )
    if amodal.count == 0:
        raise EmptyAmodalMaskError("area ratio is undefined for an empty amodal mask")
    inter = int(np.count_nonzero(modal.bits & amodal.bits))
    return inter / amodal.count


def _envelope_ap(points: Sequence) -> float:
    """All-points interpolated AP from (recall, precision) pairs."""
    if not points:
        return 0.0
    order = sorted(points)
    recalls = [r for r, _ in order]
    # suffix max: best precision achievable at recall >= recalls[i]
    suffix = [0.0] * len(order)
    best = 0.0
    for i in range(len(order) - 1, -1, -1):
        best = max(best, order[i][1])
        suffix[i] = best
    ap = 0.0
    prev_r = 0.0
    for i, r in enumerate(recalls):
        if r <= prev_r:
            continue
        ap += (r - prev_r) * suffix[i]
        prev_r = r
    return ap


def occlusion_pr(samples: Sequence) -> PRCurve:
    """PR sweep for the "unoccluded" classifier: positive when ratio >= threshold.

    Thresholds run over every distinct ratio, descending, so each point is a
    distinct confusion matrix.
    """
    n_pos = sum(1 for s in samples if not s.occluded_truth)
    if n_pos == 0:
        raise NoPositivesError("need at least one unoccluded sample")
    ordered = sorted(samples, key=lambda s: -s.ratio)
    points = []
    tp = taken = 0
    i = 0
    while i < len(ordered):
        thr = ordered[i].ratio
        while i < len(ordered) and ordered[i].ratio == thr:
            taken += 1
            tp += not ordered[i].occluded_truth
            i += 1
        points.append((thr, tp / taken, tp / n_pos))
    ap = _envelope_ap([(rec, prec) for _, prec, rec in points])
    return PRCurve(points=tuple(points), average_precision=ap)


def ratio_histogram(ratios: Sequence, bins: int = 100) -> np.ndarray:
    """Counts over equal-width bins on [0, 1]; the last bin includes 1.0."""
    if bins < 1:
        raise ValueError(f"bins must be >= 1, got {bins}")
    counts = np.zeros(bins, dtype=np.int64)
    for r in ratios:
        if not 0.0 <= r <= 1.0:
            raise ValueError(f"ratio must be in [0, 1], got {r!r}")
        counts[min(int(r * bins), bins - 1)] += 1
    return counts


DEFAULT_CUTOFF_GRID = tuple(i / 100 for i in range(101))


def accuracy_curve(ious: Sequence, cutoffs: Sequence = DEFAULT_CUTOFF_GRID) -> AccuracyCurve:
    """Fraction of instances with IoU >= cutoff, over a cutoff grid.

    The AUC is the mean accuracy over the grid; acc@50 and acc@70 are
    computed directly from the IoUs, independent of the grid.
    """
    if len(ious) == 0:
        raise EmptyInputError("need at least one IoU")
    arr = np.asarray(ious, dtype=np.float64)
    if arr.min() < 0.0 or arr.max() > 1.0:
        raise ValueError("IoUs must lie in [0, 1]")
    points = tuple(
        (float(c), float(np.count_nonzero(arr >= c) / arr.size)) for c in cutoffs
    )
    if not points:
        raise ValueError("cutoff grid is empty")
    auc = float(np.mean([acc for _, acc in points]))
    acc50 = float(np.count_nonzero(arr >= 0.5) / arr.size)
    acc70 = float(np.count_nonzero(arr >= 0.7) / arr.size)
    return AccuracyCurve(points=points, auc=auc, acc_at_50=acc50, acc_at_70=acc70)


def map_r(preds: Sequence, gts: Sequence, region_iou_cutoff: float) -> MapReport:
    """mAP^r with box assignment and mask correctness.

    Per category, predictions in descending score order (input order breaks
    ties) claim the unmatched ground truth of maximal box IoU, requiring
    IoU > 0. A claim on an annotated ground truth is correct iff the mask
    IoU clears the cutoff; a claim on an unannotated one is discarded from
    the tally. AP runs over the annotated ground-truth count; the mean is
    unweighted over categories that have annotated ground truth.
    """
    if not 0.0 < region_iou_cutoff < 1.0:
        raise ValueError(f"cutoff must be in (0, 1), got {region_iou_cutoff!r}")
    categories = sorted({g.category for g in gts})
    per_category = {}
    for cat in categories:
        cat_gts = [g for g in gts if g.category == cat]
        n_annotated = sum(1 for g in cat_gts if g.annotated)
        if n_annotated == 0:
            continue  # nothing scoreable in this category
        cat_preds = [p for p in preds if p.category == cat]
        cat_preds.sort(key=lambda p: -p.score)  # stable: input order on ties
        matched = [False] * len(cat_gts)
        rp_points = []
        tp = fp = 0
        for pred in cat_preds:
            best_iou = 0.0
            best_idx = None
            for idx, gt in enumerate(cat_gts):
                if matched[idx]:
                    continue
                iou = box_iou(pred.box, gt.box)
                if iou > best_iou:
                    best_iou = iou
                    best_idx = idx
            if best_idx is None:
                fp += 1
            else:
                matched[best_idx] = True
                gt = cat_gts[best_idx]
                if not gt.annotated:
                    continue  # absorbed: neither a hit nor a miss
                if mask_iou(pred.mask, gt.amodal_mask) >= region_iou_cutoff:
                    tp += 1
                else:
                    fp += 1
            rp_points.append((tp / n_annotated, tp / (tp + fp)))
        per_category[cat] = _envelope_ap(rp_points)
    mean_ap = sum(per_category.values()) / len(per_category) if per_category else 0.0
    return MapReport(per_category=per_category, mean_ap=mean_ap,
                     region_iou_cutoff=region_iou_cutoff)


# ---------------------------------------------------------------------------
# JSON-lines readers


def _jsonl_records(path):
    path = pathlib.Path(path)
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                record = json.loads(line)
            except ValueError as exc:
                raise ValueError(f"{path}:{lineno}: not valid JSON: {exc}") from None
            if not isinstance(record, dict):
                raise ValueError(f"{path}:{lineno}: record must be a JSON object")
            yield lineno, record


def _record_keys(path, lineno, record, required, optional=()):
    keys = set(record)
    missing = sorted(set(required) - keys)
    extra = sorted(keys - set(required) - set(optional))
    if missing or extra:
        raise ValueError(
            f"{path}:{lineno}: bad record keys (missing={missing}, extra={extra})"
        )


def _record_box(path, lineno, value) -> BBox:
    if (not isinstance(value, list) or len(value) != 4
            or any(isinstance(v, bool) or not isinstance(v, int) for v in value)):
        raise ValueError(f"{path}:{lineno}: box must be [x0, y0, x1, y1] integers")
    try:
        return BBox(*value)
    except ValueError as exc:
        raise ValueError(f"{path}:{lineno}: {exc}") from None


def _record_mask(path, lineno, rel) -> BinaryMask:
    if not isinstance(rel, str) or not rel:
        raise ValueError(f"{path}:{lineno}: mask path must be a non-empty string")
    try:
        return load_mask_png(pathlib.Path(path).parent / rel)
    except (OSError, ValueError) as exc:
        raise ValueError(f"{path}:{lineno}: cannot load mask {rel!r}: {exc}") from None


def read_area_ratio_samples(path) -> list:
    """Records: {"ratio": r, "occluded": b} or
    {"modal_mask_path": ..., "amodal_mask_path": ..., "occluded": b}."""
    samples = []
    for lineno, rec in _jsonl_records(path):
        if "ratio" in rec:
            _record_keys(path, lineno, rec, ("ratio", "occluded"))
            ratio = rec["ratio"]
            if isinstance(ratio, bool) or not isinstance(ratio, (int, float)):
                raise ValueError(f"{path}:{lineno}: ratio must be a number")
            ratio = float(ratio)
        else:
            _record_keys(path, lineno, rec,
                         ("modal_mask_path", "amodal_mask_path", "occluded"))
            modal = _record_mask(path, lineno, rec["modal_mask_path"])
            amodal = _record_mask(path, lineno, rec["amodal_mask_path"])
            try:
                ratio = area_ratio(modal, amodal)
            except ValueError as exc:
                raise ValueError(f"{path}:{lineno}: {exc}") from None
        if not isinstance(rec["occluded"], bool):
            raise ValueError(f"{path}:{lineno}: occluded must be a boolean")
        try:
            samples.append(AreaRatioSample(ratio=ratio, occluded_truth=rec["occluded"]))
        except ValueError as exc:
            raise ValueError(f"{path}:{lineno}: {exc}") from None
    return samples


def read_ious(path) -> list:
    """Records: {"iou": x} or {"pred_mask_path": ..., "truth_mask_path": ...}."""
    ious = []
    for lineno, rec in _jsonl_records(path):
        if "iou" in rec:
            _record_keys(path, lineno, rec, ("iou",))
            iou = rec["iou"]
            if isinstance(iou, bool) or not isinstance(iou, (int, float)):
                raise ValueError(f"{path}:{lineno}: iou must be a number")
            iou = float(iou)
        else:
            _record_keys(path, lineno, rec, ("pred_mask_path", "truth_mask_path"))
            pred = _record_mask(path, lineno, rec["pred_mask_path"])
            truth = _record_mask(path, lineno, rec["truth_mask_path"])
            try:
                iou = mask_iou(pred, truth)
            except ValueError as exc:
                raise ValueError(f"{path}:{lineno}: {exc}") from None
        if not 0.0 <= iou <= 1.0:
            raise ValueError(f"{path}:{lineno}: iou must be in [0, 1], got {iou!r}")
        ious.append(iou)
    return ious


def read_detseg_predictions(path) -> list:
    """Records: {"category": c, "score": s, "box": [x0,y0,x1,y1], "mask_path": p}."""
    preds = []
    for lineno, rec in _jsonl_records(path):
        _record_keys(path, lineno, rec, ("category", "score", "box", "mask_path"))
        score = rec["score"]
        if isinstance(score, bool) or not isinstance(score, (int, float)):
            raise ValueError(f"{path}:{lineno}: score must be a number")
        try:
            preds.append(DetSegPrediction(
                category=rec["category"],
                score=float(score),
                box=_record_box(path, lineno, rec["box"]),
                mask=_record_mask(path, lineno, rec["mask_path"]),
            ))
        except ValueError as exc:
            raise ValueError(f"{path}:{lineno}: {exc}") from None
    return preds


def read_ground_truths(path) -> list:
    """Records: {"category": c, "box": [...], "amodal_mask_path": p | null}.

    A null or absent amodal_mask_path marks an unannotated instance."""
    gts = []
    for lineno, rec in _jsonl_records(path):
        _record_keys(path, lineno, rec, ("category", "box"), optional=("amodal_mask_path",))
        rel = rec.get("amodal_mask_path")
        mask = None if rel is None else _record_mask(path, lineno, rel)
        try:
            gts.append(GroundTruthInstance(
                category=rec["category"],
                box=_record_box(path, lineno, rec["box"]),
                amodal_mask=mask,
            ))
        except ValueError as exc:
            raise ValueError(f"{path}:{lineno}: {exc}") from None
    return gts


# ---------------------------------------------------------------------------
# Artifact writers


def write_pr_curve_csv(curve: PRCurve, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["threshold", "precision", "recall"])
        for thr, prec, rec in curve.points:
            writer.writerow([repr(float(thr)), repr(float(prec)), repr(float(rec))])


def write_histogram_csv(samples: Sequence, path, bins: int = 100) -> None:
    occluded = ratio_histogram([s.ratio for s in samples if s.occluded_truth], bins)
    unoccluded = ratio_histogram([s.ratio for s in samples if not s.occluded_truth], bins)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["bin_lo", "bin_hi", "count_occluded", "count_unoccluded"])
        for i in range(bins):
            writer.writerow([repr(i / bins), repr((i + 1) / bins),
                             int(occluded[i]), int(unoccluded[i])])


def write_accuracy_curve_csv(curve: AccuracyCurve, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["cutoff", "accuracy"])
        for cutoff, acc in curve.points:
            writer.writerow([repr(float(cutoff)), repr(float(acc))])


def write_map_report_json(report: MapReport, path) -> None:
    dump_json({
        "region_iou_cutoff": report.region_iou_cutoff,
        "per_category": {k: report.per_category[k] for k in sorted(report.per_category)},
        "mean_ap": report.mean_ap,
    }, path)
