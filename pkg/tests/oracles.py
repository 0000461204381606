"""Slow, independent reference implementations used to check the package.

Everything here is written from the definitions alone, favoring explicit
per-pixel loops and O(n^2) sweeps over cleverness, so disagreement with the
package points at the package.
"""

from __future__ import annotations

import math

import numpy as np


# ---------------------------------------------------------------------------
# Boxes and masks


def bbox_scan(bits: np.ndarray) -> tuple[int, int, int, int]:
    """Tight half-open bbox of a boolean grid by exhaustive scan."""
    h, w = bits.shape
    x0, y0, x1, y1 = w, h, 0, 0
    found = False
    for y in range(h):
        for x in range(w):
            if bits[y, x]:
                found = True
                x0 = min(x0, x)
                y0 = min(y0, y)
                x1 = max(x1, x + 1)
                y1 = max(y1, y + 1)
    if not found:
        raise ValueError("empty mask")
    return (x0, y0, x1, y1)


def box_iou_cells(a: tuple, b: tuple) -> float:
    """Box IoU by counting integer cells; boxes are half-open (x0, y0, x1, y1)."""

    def cells(box):
        return {
            (x, y)
            for x in range(box[0], box[2])
            for y in range(box[1], box[3])
        }

    ca, cb = cells(a), cells(b)
    union = len(ca | cb)
    return len(ca & cb) / union if union else 0.0


def mask_iou_loop(a: np.ndarray, b: np.ndarray) -> float:
    inter = union = 0
    for y in range(a.shape[0]):
        for x in range(a.shape[1]):
            pa, pb = bool(a[y, x]), bool(b[y, x])
            inter += pa and pb
            union += pa or pb
    return inter / union if union else 1.0


def per_dim_overlap_cells(box: tuple, ref: tuple) -> tuple[float, float]:
    """Per-axis overlap fraction by counting integer coordinates in both spans."""
    xs = sum(1 for x in range(ref[0], ref[2]) if box[0] <= x < box[2])
    ys = sum(1 for y in range(ref[1], ref[3]) if box[1] <= y < box[3])
    return (xs / (ref[2] - ref[0]), ys / (ref[3] - ref[1]))


# ---------------------------------------------------------------------------
# Resampling references (closed-form per output pixel)


def _src_pos(i: int, out_len: int, src_len: int) -> float:
    pos = (i + 0.5) * (src_len / out_len) - 0.5
    return min(max(pos, 0.0), float(src_len - 1))


def resize_bilinear_ref(src: np.ndarray, out_w: int, out_h: int) -> np.ndarray:
    src = np.asarray(src, dtype=np.float64)
    bands = 1 if src.ndim == 2 else src.shape[2]
    flat = src.reshape(src.shape[0], src.shape[1], bands)
    out = np.zeros((out_h, out_w, bands), dtype=np.float64)
    for j in range(out_h):
        for i in range(out_w):
            fx = _src_pos(i, out_w, src.shape[1])
            fy = _src_pos(j, out_h, src.shape[0])
            x0, y0 = int(math.floor(fx)), int(math.floor(fy))
            x1 = min(x0 + 1, src.shape[1] - 1)
            y1 = min(y0 + 1, src.shape[0] - 1)
            tx, ty = fx - x0, fy - y0
            for c in range(bands):
                top = flat[y0, x0, c] * (1 - tx) + flat[y0, x1, c] * tx
                bot = flat[y1, x0, c] * (1 - tx) + flat[y1, x1, c] * tx
                out[j, i, c] = top * (1 - ty) + bot * ty
    return out[:, :, 0] if src.ndim == 2 else out


def resize_nearest_ref(src: np.ndarray, out_w: int, out_h: int) -> np.ndarray:
    src = np.asarray(src)
    out_shape = (out_h, out_w) if src.ndim == 2 else (out_h, out_w, src.shape[2])
    out = np.zeros(out_shape, dtype=src.dtype)
    for j in range(out_h):
        for i in range(out_w):
            sx = min(int(math.floor((i + 0.5) * src.shape[1] / out_w)), src.shape[1] - 1)
            sy = min(int(math.floor((j + 0.5) * src.shape[0] / out_h)), src.shape[0] - 1)
            out[j, i] = src[sy, sx]
    return out


def quantize_u8_ref(v: float) -> int:
    """Round half away from zero, clamped to [0, 255]; inputs are >= 0."""
    return min(255, max(0, int(math.floor(v + 0.5))))


# ---------------------------------------------------------------------------
# Ranking metrics


def pr_points_sweep(samples: list[tuple[float, bool]]) -> list[tuple[float, float, float]]:
    """(threshold, precision, recall) at every distinct ratio, O(n^2).

    samples are (ratio, occluded_truth); the positive class is unoccluded and
    a sample counts as predicted positive when ratio >= threshold.
    """
    n_pos = sum(1 for _, occ in samples if not occ)
    if n_pos == 0:
        raise ValueError("no positive samples")
    points = []
    for thr in sorted({r for r, _ in samples}, reverse=True):
        predicted = [(r, occ) for r, occ in samples if r >= thr]
        tp = sum(1 for _, occ in predicted if not occ)
        points.append((thr, tp / len(predicted), tp / n_pos))
    return points


def envelope_ap(points: list[tuple[float, float]]) -> float:
    """All-points interpolated AP from (recall, precision) pairs, O(n^2).

    Integrates max precision at recall >= r over recall steps from 0.
    """
    pts = sorted(points)
    ap = 0.0
    prev_r = 0.0
    for r, _ in pts:
        if r <= prev_r:
            continue
        pmax = max(p for rr, p in pts if rr >= r)
        ap += (r - prev_r) * pmax
        prev_r = r
    return ap


def histogram_ref(ratios: list[float], bins: int) -> list[int]:
    counts = [0] * bins
    for r in ratios:
        idx = min(int(math.floor(r * bins)), bins - 1)
        counts[idx] += 1
    return counts


def accuracy_curve_ref(ious: list[float], cutoffs: list[float]):
    points = []
    for c in cutoffs:
        acc = sum(1 for v in ious if v >= c) / len(ious)
        points.append((c, acc))
    auc = sum(p for _, p in points) / len(points)
    return points, auc


def map_r_ref(
    preds: list[dict], gts: list[dict], cutoff: float
) -> tuple[dict, float]:
    """Greedy detection-matching mAP, simulated step by step.

    preds: {category, score, box, mask}; gts: {category, box, mask-or-None}.
    Boxes are half-open tuples, masks are boolean arrays or None (unannotated).
    Returns (per-category AP, mean over categories with annotated gt).
    """
    categories = sorted({g["category"] for g in gts})
    per_cat = {}
    for cat in categories:
        cat_gts = [g for g in gts if g["category"] == cat]
        n_annotated = sum(1 for g in cat_gts if g["mask"] is not None)
        if n_annotated == 0:
            continue
        cat_preds = sorted(
            [p for p in preds if p["category"] == cat],
            key=lambda p: -p["score"],
        )
        taken = [False] * len(cat_gts)
        outcomes = []
        for p in cat_preds:
            best, best_iou = None, 0.0
            for gi, g in enumerate(cat_gts):
                if taken[gi]:
                    continue
                iou = box_iou_cells(p["box"], g["box"])
                if iou > best_iou:
                    best, best_iou = gi, iou
            if best is None:
                outcomes.append("fp")
                continue
            taken[best] = True
            g = cat_gts[best]
            if g["mask"] is None:
                outcomes.append("ignore")
            elif mask_iou_loop(p["mask"], g["mask"]) >= cutoff:
                outcomes.append("tp")
            else:
                outcomes.append("fp")
        tp = fp = 0
        rp_points = []
        for o in outcomes:
            if o == "ignore":
                continue
            if o == "tp":
                tp += 1
            else:
                fp += 1
            rp_points.append((tp / n_annotated, tp / (tp + fp)))
        per_cat[cat] = envelope_ap(rp_points) if rp_points else 0.0
    mean_ap = sum(per_cat.values()) / len(per_cat) if per_cat else 0.0
    return per_cat, mean_ap


def margin_mean_ref(values, margin_frac, direction):
    """Per-pixel membership loop over one margin strip; None if the strip is empty.

    The raster margin is round-half-up of size*f/(1+2f) per axis; left/right
    strips take the full height, up/down only the inner width.
    """
    h, w = values.shape
    mr = int(math.floor(h * margin_frac / (1.0 + 2.0 * margin_frac) + 0.5))
    mc = int(math.floor(w * margin_frac / (1.0 + 2.0 * margin_frac) + 0.5))
    total = 0.0
    count = 0
    for i in range(h):
        for j in range(w):
            if direction == "up":
                member = i < mr and mc <= j < w - mc
            elif direction == "down":
                member = i >= h - mr and mc <= j < w - mc
            elif direction == "left":
                member = j < mc
            else:
                member = j >= w - mc
            if member:
                total += float(values[i, j])
                count += 1
    return total / count if count else None
