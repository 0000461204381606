"""Shared raster primitives: images, masks, heatmaps, boxes, and resampling."""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image as PILImage

# Trilabel pixel codes. NEGATIVE/POSITIVE train the net; UNKNOWN is excluded
# from the loss entirely.
NEGATIVE = 0
POSITIVE = 1
UNKNOWN = 255


class EmptyMaskError(ValueError):
    """A mask that must contain foreground pixels has none."""


class DimensionMismatchError(ValueError):
    """Two rasters that must share a shape do not."""


class BoxOutsideImageError(ValueError):
    """A crop box has no overlap with the image plane."""


def _frozen_array(values, dtype) -> np.ndarray:
    arr = np.array(values, dtype=dtype, order="C")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class BBox:
    """Axis-aligned integer box, half-open: [x0, x1) x [y0, y1)."""

    x0: int
    y0: int
    x1: int
    y1: int

    def __post_init__(self):
        for v in (self.x0, self.y0, self.x1, self.y1):
            if not isinstance(v, (int, np.integer)) or isinstance(v, bool):
                raise ValueError(f"box coordinates must be integers, got {v!r}")
        object.__setattr__(self, "x0", int(self.x0))
        object.__setattr__(self, "y0", int(self.y0))
        object.__setattr__(self, "x1", int(self.x1))
        object.__setattr__(self, "y1", int(self.y1))
        if self.x1 <= self.x0 or self.y1 <= self.y0:
            raise ValueError(f"box must have positive area, got {self.as_tuple()}")

    @property
    def width(self) -> int:
        return self.x1 - self.x0

    @property
    def height(self) -> int:
        return self.y1 - self.y0

    @property
    def area(self) -> int:
        return self.width * self.height

    def as_tuple(self) -> tuple[int, int, int, int]:
        return (self.x0, self.y0, self.x1, self.y1)

    def intersect(self, other: "BBox") -> "BBox | None":
        """Intersection box, or None when the overlap has zero area."""
        x0 = max(self.x0, other.x0)
        y0 = max(self.y0, other.y0)
        x1 = min(self.x1, other.x1)
        y1 = min(self.y1, other.y1)
        if x1 <= x0 or y1 <= y0:
            return None
        return BBox(x0, y0, x1, y1)

    def clip(self, width: int, height: int) -> "BBox | None":
        """Clip to an image plane of the given size; None if nothing remains."""
        return self.intersect(BBox(0, 0, width, height))

    def contains(self, other: "BBox") -> bool:
        return (
            self.x0 <= other.x0
            and self.y0 <= other.y0
            and other.x1 <= self.x1
            and other.y1 <= self.y1
        )


@dataclass(frozen=True)
class Image:
    """8-bit RGB raster stored row-major as an (h, w, 3) uint8 array."""

    pixels: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.pixels)
        if p.ndim != 3 or p.shape[2] != 3:
            raise ValueError(f"pixels must be (h, w, 3), got shape {p.shape}")
        if p.shape[0] < 1 or p.shape[1] < 1:
            raise ValueError("image must be at least 1x1")
        if p.dtype != np.uint8:
            raise ValueError(f"pixels must be uint8, got {p.dtype}")
        object.__setattr__(self, "pixels", _frozen_array(p, np.uint8))

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def height(self) -> int:
        return self.pixels.shape[0]


@dataclass(frozen=True)
class BinaryMask:
    """Boolean foreground mask over an (h, w) grid."""

    bits: np.ndarray

    def __post_init__(self):
        b = np.asarray(self.bits)
        if b.ndim != 2:
            raise ValueError(f"mask must be 2-d, got shape {b.shape}")
        if b.shape[0] < 1 or b.shape[1] < 1:
            raise ValueError("mask must be at least 1x1")
        if b.dtype != np.bool_:
            if not np.isin(b, (0, 1)).all():
                raise ValueError("mask values must be 0 or 1")
        object.__setattr__(self, "bits", _frozen_array(b, bool))

    @property
    def width(self) -> int:
        return self.bits.shape[1]

    @property
    def height(self) -> int:
        return self.bits.shape[0]

    @property
    def count(self) -> int:
        """Number of foreground pixels."""
        return int(np.count_nonzero(self.bits))


@dataclass(frozen=True)
class TriLabelMask:
    """Per-pixel supervision labels: NEGATIVE, POSITIVE, or UNKNOWN."""

    labels: np.ndarray

    def __post_init__(self):
        lab = np.asarray(self.labels)
        if lab.ndim != 2:
            raise ValueError(f"labels must be 2-d, got shape {lab.shape}")
        if lab.shape[0] < 1 or lab.shape[1] < 1:
            raise ValueError("label map must be at least 1x1")
        arr = lab.astype(np.uint8, casting="safe") if lab.dtype != np.uint8 else lab
        valid = (arr == NEGATIVE) | (arr == POSITIVE) | (arr == UNKNOWN)
        if not valid.all():
            bad = np.unique(arr[~valid])
            raise ValueError(f"labels must be in {{0, 1, 255}}, found {bad.tolist()}")
        object.__setattr__(self, "labels", _frozen_array(arr, np.uint8))

    @property
    def width(self) -> int:
        return self.labels.shape[1]

    @property
    def height(self) -> int:
        return self.labels.shape[0]


@dataclass(frozen=True)
class Heatmap:
    """Dense float32 map of per-pixel foreground probability in [0, 1]."""

    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values)
        if v.ndim != 2:
            raise ValueError(f"heatmap must be 2-d, got shape {v.shape}")
        if v.shape[0] < 1 or v.shape[1] < 1:
            raise ValueError("heatmap must be at least 1x1")
        arr = v.astype(np.float32)
        if np.isnan(arr).any():
            raise ValueError("heatmap contains NaN")
        lo, hi = float(arr.min()), float(arr.max())
        if lo < 0.0 or hi > 1.0:
            raise ValueError(f"heatmap values must lie in [0, 1], got [{lo}, {hi}]")
        object.__setattr__(self, "values", _frozen_array(arr, np.float32))

    @property
    def width(self) -> int:
        return self.values.shape[1]

    @property
    def height(self) -> int:
        return self.values.shape[0]


# ---------------------------------------------------------------------------
# Box and mask arithmetic


def bbox_of(mask: BinaryMask) -> BBox:
    """Tight bounding box of the foreground pixels.

    Raises:
        EmptyMaskError: if the mask has no foreground.
    """
    ys, xs = np.nonzero(mask.bits)
    if len(xs) == 0:
        raise EmptyMaskError("cannot take the bounding box of an empty mask")
    return BBox(int(xs.min()), int(ys.min()), int(xs.max()) + 1, int(ys.max()) + 1)


def box_iou(a: BBox, b: BBox) -> float:
    inter = a.intersect(b)
    if inter is None:
        return 0.0
    return inter.area / (a.area + b.area - inter.area)


def mask_iou(a: BinaryMask, b: BinaryMask) -> float:
    """Intersection over union of two same-shape masks; 1.0 when both empty."""
    if a.bits.shape != b.bits.shape:
        raise DimensionMismatchError(
            f"mask shapes differ: {a.bits.shape} vs {b.bits.shape}"
        )
    inter = int(np.count_nonzero(a.bits & b.bits))
    union = int(np.count_nonzero(a.bits | b.bits))
    if union == 0:
        return 1.0
    return inter / union


def per_dim_overlap(box: BBox, ref: BBox) -> tuple[float, float]:
    """Overlap of box with ref along each axis, as a fraction of ref's extent.

    Returns (fraction_x, fraction_y), each in [0, 1].
    """
    ox = min(box.x1, ref.x1) - max(box.x0, ref.x0)
    oy = min(box.y1, ref.y1) - max(box.y0, ref.y0)
    return (max(0, ox) / ref.width, max(0, oy) / ref.height)


# ---------------------------------------------------------------------------
# Resampling
#
# Pixel-center convention: output sample i maps to source coordinate
# (i + 0.5) * (src_len / out_len) - 0.5, clamped to [0, src_len - 1].
# Resampling to the source size is therefore exactly the identity.


def _source_positions(out_len: int, src_len: int) -> np.ndarray:
    scale = src_len / out_len
    pos = (np.arange(out_len, dtype=np.float64) + 0.5) * scale - 0.5
    return np.clip(pos, 0.0, float(src_len - 1))


def _bilinear_axis(out_len: int, src_len: int):
    pos = _source_positions(out_len, src_len)
    lo = np.floor(pos).astype(np.int64)
    hi = np.minimum(lo + 1, src_len - 1)
    return lo, hi, pos - lo


def _nearest_axis(out_len: int, src_len: int) -> np.ndarray:
    scale = src_len / out_len
    idx = np.floor((np.arange(out_len, dtype=np.float64) + 0.5) * scale).astype(np.int64)
    return np.clip(idx, 0, src_len - 1)


def resize_bilinear(src: np.ndarray, out_w: int, out_h: int) -> np.ndarray:
    """Bilinear resize of an (h, w) or (h, w, c) array; returns float64."""
    if out_w < 1 or out_h < 1:
        raise ValueError("output size must be at least 1x1")
    src = np.asarray(src, dtype=np.float64)
    xlo, xhi, tx = _bilinear_axis(out_w, src.shape[1])
    ylo, yhi, ty = _bilinear_axis(out_h, src.shape[0])
    if src.ndim == 3:
        tx = tx[:, None]
        ty = ty[:, None, None]
        top = src[ylo][:, xlo] * (1.0 - tx) + src[ylo][:, xhi] * tx
        bot = src[yhi][:, xlo] * (1.0 - tx) + src[yhi][:, xhi] * tx
    else:
        top = src[ylo][:, xlo] * (1.0 - tx) + src[ylo][:, xhi] * tx
        bot = src[yhi][:, xlo] * (1.0 - tx) + src[yhi][:, xhi] * tx
        ty = ty[:, None]
    return top * (1.0 - ty) + bot * ty


def resize_nearest(src: np.ndarray, out_w: int, out_h: int) -> np.ndarray:
    """Nearest-neighbor resize of an (h, w) or (h, w, c) array; keeps dtype."""
    if out_w < 1 or out_h < 1:
        raise ValueError("output size must be at least 1x1")
    src = np.asarray(src)
    xs = _nearest_axis(out_w, src.shape[1])
    ys = _nearest_axis(out_h, src.shape[0])
    return src[ys][:, xs]


def _quantize_u8(values: np.ndarray) -> np.ndarray:
    # round half away from zero; values are non-negative here
    return np.clip(np.floor(values + 0.5), 0, 255).astype(np.uint8)


def _materialize_region(
    pixels: np.ndarray, box: BBox, fill
) -> np.ndarray:
    """Copy of the box-shaped region, fill-padded where it leaves the plane."""
    h, w = pixels.shape[0], pixels.shape[1]
    clipped = box.clip(w, h)
    if clipped is None:
        raise BoxOutsideImageError(
            f"box {box.as_tuple()} lies outside a {w}x{h} image"
        )
    if pixels.ndim == 3:
        out = np.empty((box.height, box.width, pixels.shape[2]), dtype=pixels.dtype)
        out[:, :] = fill
    else:
        out = np.full((box.height, box.width), fill, dtype=pixels.dtype)
    out[
        clipped.y0 - box.y0 : clipped.y1 - box.y0,
        clipped.x0 - box.x0 : clipped.x1 - box.x0,
    ] = pixels[clipped.y0 : clipped.y1, clipped.x0 : clipped.x1]
    return out


def crop_resize(
    img: Image,
    box: BBox,
    out_w: int,
    out_h: int,
    *,
    interp: str = "bilinear",
    fill: tuple[int, int, int] = (0, 0, 0),
) -> Image:
    """Crop box from img (fill-padding outside the plane) and resize.

    Args:
        img: source image.
        box: crop region; may extend past the image but must overlap it.
        out_w, out_h: output size.
        interp: "bilinear" (default) or "nearest".
        fill: RGB used for the padded area.

    Raises:
        BoxOutsideImageError: if box and image do not overlap.
    """
    region = _materialize_region(img.pixels, box, np.array(fill, dtype=np.uint8))
    if interp == "bilinear":
        resized = _quantize_u8(resize_bilinear(region, out_w, out_h))
    elif interp == "nearest":
        resized = resize_nearest(region, out_w, out_h)
    else:
        raise ValueError(f"unknown interpolation {interp!r}")
    return Image(resized)


def crop_resize_mask(mask: BinaryMask, box: BBox, out_w: int, out_h: int) -> BinaryMask:
    """Crop-and-resize for masks; always nearest-neighbor, False padding."""
    region = _materialize_region(mask.bits, box, False)
    return BinaryMask(resize_nearest(region, out_w, out_h))


def crop_resize_trilabel(
    tri: TriLabelMask, box: BBox, out_w: int, out_h: int, *, fill: int = NEGATIVE
) -> TriLabelMask:
    """Crop-and-resize for label maps; always nearest-neighbor."""
    region = _materialize_region(tri.labels, box, np.uint8(fill))
    return TriLabelMask(resize_nearest(region, out_w, out_h))


def resample_heatmap(heat: Heatmap, out_w: int, out_h: int) -> Heatmap:
    """Bilinear resample of a heatmap to a new size."""
    values = resize_bilinear(heat.values, out_w, out_h)
    return Heatmap(np.clip(values, 0.0, 1.0).astype(np.float32))


def sample_bilinear(values: np.ndarray, xs: np.ndarray, ys: np.ndarray) -> np.ndarray:
    """Bilinear point samples of a 2-d array at fractional pixel coordinates.

    Coordinates are in the pixel-center frame (0.0 is the center of column or
    row 0) and are clamped to the array's edges.
    """
    values = np.asarray(values, dtype=np.float64)
    h, w = values.shape
    xs = np.clip(np.asarray(xs, dtype=np.float64), 0.0, float(w - 1))
    ys = np.clip(np.asarray(ys, dtype=np.float64), 0.0, float(h - 1))
    x0 = np.floor(xs).astype(np.int64)
    y0 = np.floor(ys).astype(np.int64)
    x1 = np.minimum(x0 + 1, w - 1)
    y1 = np.minimum(y0 + 1, h - 1)
    tx = xs - x0
    ty = ys - y0
    top = values[y0, x0] * (1.0 - tx) + values[y0, x1] * tx
    bot = values[y1, x0] * (1.0 - tx) + values[y1, x1] * tx
    return top * (1.0 - ty) + bot * ty


def threshold_heatmap(heat: Heatmap, threshold: float) -> BinaryMask:
    """Pixels strictly above threshold become foreground."""
    if not 0.0 <= threshold <= 1.0:
        raise ValueError(f"threshold must lie in [0, 1], got {threshold}")
    return BinaryMask(heat.values > np.float32(threshold))


# ---------------------------------------------------------------------------
# File formats


def load_image(path) -> Image:
    with PILImage.open(path) as im:
        return Image(np.asarray(im.convert("RGB"), dtype=np.uint8))


def save_image(img: Image, path) -> None:
    PILImage.fromarray(img.pixels, mode="RGB").save(path, format="PNG")


def load_mask_png(path) -> BinaryMask:
    """Read a binary mask stored as an 8-bit single-channel PNG of 0/1."""
    with PILImage.open(path) as im:
        arr = np.asarray(im.convert("L"), dtype=np.uint8)
    if not np.isin(arr, (0, 1)).all():
        bad = np.unique(arr[~np.isin(arr, (0, 1))])
        raise ValueError(f"{path}: mask PNG must contain only 0/1, found {bad.tolist()}")
    return BinaryMask(arr.astype(bool))


def save_mask_png(mask: BinaryMask, path) -> None:
    PILImage.fromarray(mask.bits.astype(np.uint8), mode="L").save(path, format="PNG")


def load_trilabel_png(path) -> TriLabelMask:
    """Read a trilabel map stored as an 8-bit single-channel PNG of {0, 1, 255}."""
    with PILImage.open(path) as im:
        arr = np.asarray(im.convert("L"), dtype=np.uint8)
    return TriLabelMask(arr)


def save_trilabel_png(tri: TriLabelMask, path) -> None:
    PILImage.fromarray(tri.labels, mode="L").save(path, format="PNG")


def load_heatmap(path) -> Heatmap:
    """Read a .hmap file: <u4 width, <u4 height, then w*h little-endian f4."""
    raw = Path(path).read_bytes()
    if len(raw) < 8:
        raise ValueError(f"{path}: truncated heatmap header")
    w, h = struct.unpack("<II", raw[:8])
    if w < 1 or h < 1:
        raise ValueError(f"{path}: invalid heatmap size {w}x{h}")
    expected = 8 + 4 * w * h
    if len(raw) != expected:
        raise ValueError(f"{path}: expected {expected} bytes, found {len(raw)}")
    values = np.frombuffer(raw, dtype="<f4", offset=8).reshape(h, w)
    return Heatmap(values)


def save_heatmap(heat: Heatmap, path) -> None:
    payload = struct.pack("<II", heat.width, heat.height)
    payload += heat.values.astype("<f4").tobytes()
    Path(path).write_bytes(payload)


def load_json(path):
    with open(path, "r", encoding="utf-8") as fh:
        return json.load(fh)


def dump_json(obj, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")
