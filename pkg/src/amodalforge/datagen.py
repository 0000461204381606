"""Synthesize occlusion training samples by compositing annotated instances.

A sample starts from one annotated object (the main object), crops a patch
around it, optionally pastes other instances on top as occluders using their
masks as hard alpha mattes, and emits the composite together with trilabel
supervision and the object's uncorrupted mask as amodal truth.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .core import (
    NEGATIVE,
    POSITIVE,
    UNKNOWN,
    BBox,
    BinaryMask,
    Heatmap,
    Image,
    TriLabelMask,
    bbox_of,
    crop_resize,
    crop_resize_mask,
    crop_resize_trilabel,
    dump_json,
    load_image,
    load_json,
    load_mask_png,
    per_dim_overlap,
    resize_bilinear,
    save_image,
    save_mask_png,
    save_trilabel_png,
)

NET_RESOLUTION = 224


class EmptyDatasetError(ValueError):
    """The manifest holds no images to sample from."""


class ConstraintUnsatisfiableError(RuntimeError):
    """A sampling constraint could not be met within the retry budget."""


class GenerationFailedError(RuntimeError):
    """All restarts of a sample draw were exhausted."""


class SampleRejected(Exception):
    """The sample fails the visible-pixel floor; the caller should redraw."""


class EmptyObjectError(ValueError):
    """The main object has no pixels inside the patch."""


# ---------------------------------------------------------------------------
# Dataset manifest


@dataclass(frozen=True)
class InstanceRecord:
    """One annotated instance: its category and full-image modal mask."""

    image_id: str
    category: str
    modal_mask: BinaryMask
    occluded_flag: bool | None = None

    def __post_init__(self):
        if self.modal_mask.count == 0:
            raise ValueError(f"instance in image {self.image_id!r} has an empty mask")


@dataclass(frozen=True)
class SourceImage:
    image_id: str
    path: str
    image: Image
    instances: tuple[InstanceRecord, ...]


@dataclass(frozen=True)
class DatasetManifest:
    images: tuple[SourceImage, ...]
    categories: tuple[str, ...]
    mean_pixel: tuple[float, float, float]


def load_manifest(path) -> DatasetManifest:
    """Load manifest.json; image and mask paths are relative to its directory.

    Validates that every image decodes, every instance's mask matches its
    image's dimensions and is non-empty, and categories are declared.
    """
    doc = load_json(path)
    root = Path(path).parent
    categories = tuple(doc["categories"])
    if not categories:
        raise ValueError(f"{path}: empty category list")
    mean_pixel = tuple(float(c) for c in doc["mean_pixel"])
    if len(mean_pixel) != 3 or any(not 0 <= c <= 255 for c in mean_pixel):
        raise ValueError(f"{path}: mean_pixel must be three values in [0, 255]")
    images = []
    for entry in doc["images"]:
        image_id = str(entry["id"])
        image = load_image(root / entry["path"])
        if not entry["instances"]:
            raise ValueError(f"{path}: image {image_id!r} has no instances")
        instances = []
        for inst in entry["instances"]:
            category = inst["category"]
            if category not in categories:
                raise ValueError(
                    f"{path}: image {image_id!r} uses undeclared category {category!r}"
                )
            mask = load_mask_png(root / inst["mask_path"])
            if (mask.height, mask.width) != (image.height, image.width):
                raise ValueError(
                    f"{path}: mask {inst['mask_path']} is {mask.width}x{mask.height}, "
                    f"image {image_id!r} is {image.width}x{image.height}"
                )
            instances.append(
                InstanceRecord(image_id, category, mask, inst.get("occluded"))
            )
        images.append(SourceImage(image_id, str(entry["path"]), image, tuple(instances)))
    return DatasetManifest(tuple(images), categories, mean_pixel)


# ---------------------------------------------------------------------------
# Generation config and outputs


@dataclass(frozen=True)
class GenConfig:
    """Knobs of the compositing procedure; defaults follow the sampling rules."""

    patch_overlap_min: float = 0.70
    patch_size_min: float = 0.70
    patch_size_max: float = 2.00
    max_overlays: int = 2
    overlay_scale_mean: float = 0.75
    visibility_min: float = 0.30
    jitter_overlap_min: float = 0.75
    jitter_size_tol: float = 0.10
    dynamic_generation: bool = True
    max_retries: int = 50
    max_restarts: int = 10

    def __post_init__(self):
        for name in ("patch_overlap_min", "visibility_min", "jitter_overlap_min",
                     "overlay_scale_mean"):
            v = getattr(self, name)
            if not 0 < v <= 1:
                raise ValueError(f"{name} must lie in (0, 1], got {v}")
        if not 0 <= self.jitter_size_tol <= 1:
            raise ValueError(f"jitter_size_tol must lie in [0, 1], got {self.jitter_size_tol}")
        if not 0 < self.patch_size_max <= 4:
            raise ValueError(f"patch_size_max must lie in (0, 4], got {self.patch_size_max}")
        if not 0 < self.patch_size_min <= self.patch_size_max:
            raise ValueError("patch_size_min must lie in (0, patch_size_max]")
        if self.max_overlays < 0:
            raise ValueError("max_overlays must be >= 0")
        if self.max_retries < 1 or self.max_restarts < 1:
            raise ValueError("retry budgets must be >= 1")


@dataclass(frozen=True)
class GenSample:
    """One synthesized training example.

    patch_box is in source-image coordinates; every other box and raster is in
    patch coordinates. true_full_mask is the main object's original modal mask
    cropped to the patch: the effective amodal truth for the composite.
    """

    patch: Image
    patch_box: BBox
    jittered_modal_box: BBox
    target: TriLabelMask
    visible_mask: BinaryMask
    true_full_mask: BinaryMask
    seed: int
    main_category: str
    image_id: str
    instance_index: int
    visible_box: BBox
    visible_fraction: float
    n_overlays: int

    def __post_init__(self):
        shape = self.patch.pixels.shape[:2]
        for raster in (self.target.labels, self.visible_mask.bits, self.true_full_mask.bits):
            if raster.shape != shape:
                raise ValueError("patch, target and masks must share dimensions")
        if (self.patch_box.width, self.patch_box.height) != (shape[1], shape[0]):
            raise ValueError("patch_box must match the patch dimensions")
        if ((self.target.labels == POSITIVE) != self.true_full_mask.bits).any():
            raise ValueError("POSITIVE target pixels must equal true_full_mask")
        if (self.visible_mask.bits & ~self.true_full_mask.bits).any():
            raise ValueError("visible_mask must be a subset of true_full_mask")


# ---------------------------------------------------------------------------
# Constraint helpers
#
# Percentages apply to integer pixel lengths, so the admissible integer range
# is computed exactly: guard the float product with a small epsilon, then
# repair by stepping until the rational constraint itself holds.


def _round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


def _min_len_at_least(frac: float, ref: int) -> int:
    length = max(0, math.ceil(frac * ref - 1e-9))
    while length / ref < frac:
        length += 1
    return length


def _max_len_at_most(frac: float, ref: int) -> int:
    length = math.floor(frac * ref + 1e-9)
    while length > 0 and length / ref > frac:
        length -= 1
    return length


def _draw_len(rng, lo_frac: float, hi_frac: float, ref: int, lo: int, hi: int) -> int:
    length = _round_half_up(rng.uniform(lo_frac, hi_frac) * ref)
    return min(max(length, lo), hi)


def sample_patch_box(
    obj_box: BBox, image_w: int, image_h: int, cfg: GenConfig, rng
) -> BBox:
    """Sample a patch box around the object.

    The box overlaps the object's bbox by at least patch_overlap_min per axis
    and its dimensions are within [patch_size_min, patch_size_max] of the
    object's. Candidates are clipped to the image and resampled when clipping
    breaks a constraint.

    Raises:
        ConstraintUnsatisfiableError: after max_retries failed candidates.
    """
    need = []
    for ref in (obj_box.width, obj_box.height):
        o_min = _min_len_at_least(cfg.patch_overlap_min, ref)
        lo = max(1, _min_len_at_least(cfg.patch_size_min, ref), o_min)
        hi = _max_len_at_most(cfg.patch_size_max, ref)
        if hi < lo:
            raise ConstraintUnsatisfiableError(
                f"no integer patch length satisfies size bounds for extent {ref}"
            )
        need.append((o_min, lo, hi))
    (ox_min, lo_w, hi_w), (oy_min, lo_h, hi_h) = need

    for _ in range(cfg.max_retries):
        w = _draw_len(rng, cfg.patch_size_min, cfg.patch_size_max, obj_box.width, lo_w, hi_w)
        h = _draw_len(rng, cfg.patch_size_min, cfg.patch_size_max, obj_box.height, lo_h, hi_h)
        x0 = int(rng.integers(obj_box.x0 + ox_min - w, obj_box.x1 - ox_min + 1))
        y0 = int(rng.integers(obj_box.y0 + oy_min - h, obj_box.y1 - oy_min + 1))
        clipped = BBox(x0, y0, x0 + w, y0 + h).clip(image_w, image_h)
        if clipped is not None and _patch_constraints_hold(clipped, obj_box, cfg):
            return clipped
    raise ConstraintUnsatisfiableError(
        f"no valid patch box around {obj_box.as_tuple()} in {cfg.max_retries} tries"
    )


def _patch_constraints_hold(box: BBox, obj_box: BBox, cfg: GenConfig) -> bool:
    fx, fy = per_dim_overlap(box, obj_box)
    if fx < cfg.patch_overlap_min or fy < cfg.patch_overlap_min:
        return False
    for length, ref in ((box.width, obj_box.width), (box.height, obj_box.height)):
        if not cfg.patch_size_min <= length / ref <= cfg.patch_size_max:
            return False
    return True


def jitter_box(vis_box: BBox, cfg: GenConfig, rng) -> BBox:
    """Randomly perturb a box: per-axis overlap >= jitter_overlap_min with the
    original, dimensions within jitter_size_tol of the original (>= 1 pixel).

    The result is not clipped to any plane; consumers clip when cropping.
    Falls back to vis_box unchanged if no candidate passes in max_retries.
    """
    need = []
    for ref in (vis_box.width, vis_box.height):
        o_min = _min_len_at_least(cfg.jitter_overlap_min, ref)
        lo = max(1, _min_len_at_least(1.0 - cfg.jitter_size_tol, ref), o_min)
        hi = max(lo, _max_len_at_most(1.0 + cfg.jitter_size_tol, ref))
        need.append((o_min, lo, hi))
    (ox_min, lo_w, hi_w), (oy_min, lo_h, hi_h) = need

    for _ in range(cfg.max_retries):
        w = _draw_len(rng, 1.0 - cfg.jitter_size_tol, 1.0 + cfg.jitter_size_tol,
                      vis_box.width, lo_w, hi_w)
        h = _draw_len(rng, 1.0 - cfg.jitter_size_tol, 1.0 + cfg.jitter_size_tol,
                      vis_box.height, lo_h, hi_h)
        x0 = int(rng.integers(vis_box.x0 + ox_min - w, vis_box.x1 - ox_min + 1))
        y0 = int(rng.integers(vis_box.y0 + oy_min - h, vis_box.y1 - oy_min + 1))
        cand = BBox(x0, y0, x0 + w, y0 + h)
        if _jitter_constraints_hold(cand, vis_box, cfg):
            return cand
    return vis_box


def _jitter_constraints_hold(box: BBox, vis_box: BBox, cfg: GenConfig) -> bool:
    fx, fy = per_dim_overlap(box, vis_box)
    if fx < cfg.jitter_overlap_min or fy < cfg.jitter_overlap_min:
        return False
    for length, ref in ((box.width, vis_box.width), (box.height, vis_box.height)):
        lo = max(1, _min_len_at_least(1.0 - cfg.jitter_size_tol, ref))
        hi = max(lo, _max_len_at_most(1.0 + cfg.jitter_size_tol, ref))
        if not lo <= length <= hi:
            return False
    return True


# ---------------------------------------------------------------------------
# Compositing


@dataclass
class CompositeState:
    """Mutable working buffers for one patch being composited.

    pixels is the composite so far; visible tracks which of the main object's
    pixels remain uncovered; truth is the object's full in-patch modal mask and
    never changes once set. last_overlay_box records the most recent paste.
    """

    pixels: np.ndarray
    visible: np.ndarray
    truth: np.ndarray
    patch_box: BBox
    last_overlay_box: BBox | None = None

    def copy(self) -> "CompositeState":
        return CompositeState(
            self.pixels.copy(),
            self.visible.copy(),
            self.truth,
            self.patch_box,
            self.last_overlay_box,
        )


def visible_fraction(state: CompositeState) -> float:
    """|visible| / |truth| by pixel count, in [0, 1]."""
    total = int(np.count_nonzero(state.truth))
    if total == 0:
        raise EmptyObjectError("main object has no pixels inside the patch")
    return int(np.count_nonzero(state.visible)) / total


def place_overlay(
    state: CompositeState,
    overlay_image: Image,
    overlay: InstanceRecord,
    main_box: BBox,
    cfg: GenConfig,
    rng,
) -> CompositeState:
    """Paste one occluder onto a copy of the state and return the copy.

    The occluder is scaled so its shortest bbox dimension is a uniform draw
    around overlay_scale_mean (+/- 0.25) of the patch's same-axis dimension,
    and positioned so its pasted bbox intersects main_box with positive area.
    Its mask acts as a hard alpha matte: covered pixels are replaced and
    removed from the main object's visible mask.
    """
    donor_box = bbox_of(overlay.modal_mask)
    ph, pw = state.pixels.shape[:2]
    # the donor's shortest axis is matched against the patch's same axis
    axis_x = donor_box.width <= donor_box.height
    ref = pw if axis_x else ph
    lo_frac = cfg.overlay_scale_mean - 0.25
    hi_frac = cfg.overlay_scale_mean + 0.25
    lo = max(1, _min_len_at_least(max(lo_frac, 0.0), ref))
    hi = max(lo, _max_len_at_most(hi_frac, ref))
    short_len = _draw_len(rng, lo_frac, hi_frac, ref, lo, hi)
    scale = short_len / (donor_box.width if axis_x else donor_box.height)
    if axis_x:
        ow, oh = short_len, max(1, _round_half_up(donor_box.height * scale))
    else:
        ow, oh = max(1, _round_half_up(donor_box.width * scale)), short_len

    scaled_pix = crop_resize(overlay_image, donor_box, ow, oh)
    scaled_mask = crop_resize_mask(overlay.modal_mask, donor_box, ow, oh)

    x0 = int(rng.integers(main_box.x0 - ow + 1, main_box.x1))
    y0 = int(rng.integers(main_box.y0 - oh + 1, main_box.y1))
    dest = BBox(x0, y0, x0 + ow, y0 + oh)

    out = state.copy()
    out.last_overlay_box = dest
    region = dest.clip(pw, ph)
    if region is None:
        return out
    sub = (
        slice(region.y0 - dest.y0, region.y1 - dest.y0),
        slice(region.x0 - dest.x0, region.x1 - dest.x0),
    )
    patch_sub = (slice(region.y0, region.y1), slice(region.x0, region.x1))
    alpha = scaled_mask.bits[sub]
    out.pixels[patch_sub][alpha] = scaled_pix.pixels[sub][alpha]
    out.visible[patch_sub][alpha] = False
    return out


def assign_target_labels(
    patch_box: BBox, main: InstanceRecord, others: tuple[InstanceRecord, ...] | list
) -> TriLabelMask:
    """Trilabel supervision for the patch from the source annotations.

    POSITIVE on the main object's original modal mask, UNKNOWN on other
    instances of the same source image (main membership wins on overlap),
    NEGATIVE elsewhere. Pasted occluders do not alter the target.
    """
    h, w = main.modal_mask.bits.shape
    if not BBox(0, 0, w, h).contains(patch_box):
        raise ValueError(
            f"patch box {patch_box.as_tuple()} exceeds the {w}x{h} annotation plane"
        )
    region = (slice(patch_box.y0, patch_box.y1), slice(patch_box.x0, patch_box.x1))
    labels = np.full((patch_box.height, patch_box.width), NEGATIVE, dtype=np.uint8)
    for other in others:
        if other.modal_mask.bits.shape != (h, w):
            raise ValueError("all instance masks must share the image dimensions")
        labels[other.modal_mask.bits[region]] = UNKNOWN
    labels[main.modal_mask.bits[region]] = POSITIVE
    return TriLabelMask(labels)


# ---------------------------------------------------------------------------
# Sample generation


def sample_main_object(manifest: DatasetManifest, rng) -> tuple[SourceImage, InstanceRecord]:
    """Uniformly pick an image, then uniformly pick one of its instances."""
    src, idx = _sample_main_indexed(manifest, rng)
    return src, src.instances[idx]


def _sample_main_indexed(manifest: DatasetManifest, rng) -> tuple[SourceImage, int]:
    if not manifest.images:
        raise EmptyDatasetError("manifest holds no images")
    src = manifest.images[int(rng.integers(len(manifest.images)))]
    return src, int(rng.integers(len(src.instances)))


def _object_seed(image_id: str, instance_index: int) -> int:
    digest = hashlib.sha256(f"{image_id}:{instance_index}".encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little")


def generate_example(manifest: DatasetManifest, cfg: GenConfig, seed: int) -> GenSample:
    """Produce one sample; fully determined by (manifest, cfg, seed).

    With dynamic_generation=False the patch and occlusion configuration are
    drawn from a stream keyed to the main object's identity, so every sample
    of the same object shares them; box jitter stays on the per-sample stream
    because it is augmentation, not occlusion configuration.

    Raises:
        GenerationFailedError: when max_restarts attempts all run out of retries.
    """
    if not manifest.images:
        raise EmptyDatasetError("manifest holds no images")
    rng = np.random.default_rng(seed)
    last = None
    for _ in range(cfg.max_restarts):
        try:
            return _attempt_sample(manifest, cfg, rng, seed)
        except ConstraintUnsatisfiableError as exc:
            last = exc
    raise GenerationFailedError(
        f"seed {seed}: gave up after {cfg.max_restarts} restarts ({last})"
    )


def _attempt_sample(manifest, cfg, rng, seed) -> GenSample:
    src, inst_idx = _sample_main_indexed(manifest, rng)
    inst = src.instances[inst_idx]
    gen = rng if cfg.dynamic_generation else np.random.default_rng(
        _object_seed(src.image_id, inst_idx)
    )

    obj_box = bbox_of(inst.modal_mask)
    img = src.image
    patch_box = None
    for _ in range(cfg.max_retries):
        cand = sample_patch_box(obj_box, img.width, img.height, cfg, gen)
        region = (slice(cand.y0, cand.y1), slice(cand.x0, cand.x1))
        if inst.modal_mask.bits[region].any():
            patch_box = cand
            break
    if patch_box is None:
        raise ConstraintUnsatisfiableError(
            f"object in {src.image_id!r} never landed inside a sampled patch"
        )

    truth = inst.modal_mask.bits[region].copy()
    state = CompositeState(
        pixels=img.pixels[region].copy(),
        visible=truth.copy(),
        truth=truth,
        patch_box=patch_box,
    )

    n_overlays = int(gen.integers(0, cfg.max_overlays + 1))
    for _ in range(n_overlays):
        placed = False
        for _ in range(cfg.max_retries):
            donor_src, donor_idx = _sample_main_indexed(manifest, gen)
            if donor_src.image_id == src.image_id and donor_idx == inst_idx:
                continue  # an object cannot occlude itself
            donor = donor_src.instances[donor_idx]
            main_box = bbox_of(BinaryMask(state.visible))
            cand_state = place_overlay(state, donor_src.image, donor, main_box, cfg, gen)
            if visible_fraction(cand_state) >= cfg.visibility_min:
                state = cand_state
                placed = True
                break
            # placement hid too much of the object: discard and redraw
        if not placed:
            raise ConstraintUnsatisfiableError(
                f"could not place overlay within {cfg.max_retries} tries"
            )

    vis_mask = BinaryMask(state.visible)
    vis_box = bbox_of(vis_mask)
    jittered = jitter_box(vis_box, cfg, rng)
    others = tuple(r for j, r in enumerate(src.instances) if j != inst_idx)
    target = assign_target_labels(patch_box, inst, others)

    return GenSample(
        patch=Image(state.pixels),
        patch_box=patch_box,
        jittered_modal_box=jittered,
        target=target,
        visible_mask=vis_mask,
        true_full_mask=BinaryMask(state.truth),
        seed=seed,
        main_category=inst.category,
        image_id=src.image_id,
        instance_index=inst_idx,
        visible_box=vis_box,
        visible_fraction=visible_fraction(state),
        n_overlays=n_overlays,
    )


def write_sample_dir(sample: GenSample, out_dir) -> None:
    """Emit patch.png, target.png, visible.png, truth.png and meta.json."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    save_image(sample.patch, out / "patch.png")
    save_trilabel_png(sample.target, out / "target.png")
    save_mask_png(sample.visible_mask, out / "visible.png")
    save_mask_png(sample.true_full_mask, out / "truth.png")
    dump_json(
        {
            "seed": sample.seed,
            "image_id": sample.image_id,
            "instance_index": sample.instance_index,
            "category": sample.main_category,
            "patch_box": list(sample.patch_box.as_tuple()),
            "visible_box": list(sample.visible_box.as_tuple()),
            "jittered_modal_box": list(sample.jittered_modal_box.as_tuple()),
            "visible_fraction": sample.visible_fraction,
            "n_overlays": sample.n_overlays,
        },
        out / "meta.json",
    )


# ---------------------------------------------------------------------------
# Network input preparation


@dataclass(frozen=True)
class NetExample:
    """Rasters shaped for the net: trimmed input, heat channel, full-patch target.

    input_patch is the patch minus a 10% trim per side, resized to 224x224; it
    is NOT mean-centered here — consumers subtract mean_pixel. input_heatmap
    and target are aligned to the full (untrimmed) patch frame, which the net's
    output covers.
    """

    input_patch: Image
    input_heatmap: Heatmap
    centered_heatmap_channel: np.ndarray
    target: TriLabelMask
    loss_weight: float
    category: str
    mean_pixel: tuple[float, float, float]

    def __post_init__(self):
        for raster, name in (
            (self.input_patch.pixels.shape[:2], "input_patch"),
            (self.input_heatmap.values.shape, "input_heatmap"),
            (self.centered_heatmap_channel.shape, "centered_heatmap_channel"),
            (self.target.labels.shape, "target"),
        ):
            if raster != (NET_RESOLUTION, NET_RESOLUTION):
                raise ValueError(f"{name} must be {NET_RESOLUTION}x{NET_RESOLUTION}")
        ch = self.centered_heatmap_channel
        if ch.min() < -127 or ch.max() > 128:
            raise ValueError("centered channel out of [-127, 128]")
        if not self.loss_weight > 0:
            raise ValueError("loss_weight must be positive")


def prepare_net_io(
    sample: GenSample, modal_heat: Heatmap | None, mean_pixel
) -> NetExample:
    """Shape one GenSample into net input/target rasters.

    modal_heat, when given, covers sample.jittered_modal_box; it is pasted into
    the patch frame (zero outside the box) and resampled. When None, the heat
    channel is constant 0.5.

    Raises:
        SampleRejected: visible pixels cover < 10% of the trimmed patch.
    """
    pw, ph = sample.patch.width, sample.patch.height
    tx = min(_round_half_up(0.1 * pw), (pw - 1) // 2)
    ty = min(_round_half_up(0.1 * ph), (ph - 1) // 2)
    trim_box = BBox(tx, ty, pw - tx, ph - ty)
    trim_visible = sample.visible_mask.bits[ty : ph - ty, tx : pw - tx]
    frac = int(np.count_nonzero(trim_visible)) / trim_box.area
    if frac < 0.10:
        raise SampleRejected(
            f"visible pixels cover {frac:.4f} of the trimmed patch (need 0.10)"
        )

    input_patch = crop_resize(sample.patch, trim_box, NET_RESOLUTION, NET_RESOLUTION)

    if modal_heat is None:
        heat = Heatmap(np.full((NET_RESOLUTION, NET_RESOLUTION), 0.5, dtype=np.float32))
    else:
        canvas = np.zeros((ph, pw), dtype=np.float64)
        jit = sample.jittered_modal_box
        inter = jit.intersect(BBox(0, 0, pw, ph))
        if inter is not None:
            over_box = resize_bilinear(modal_heat.values, jit.width, jit.height)
            canvas[inter.y0 : inter.y1, inter.x0 : inter.x1] = over_box[
                inter.y0 - jit.y0 : inter.y1 - jit.y0,
                inter.x0 - jit.x0 : inter.x1 - jit.x0,
            ]
        resized = resize_bilinear(canvas, NET_RESOLUTION, NET_RESOLUTION)
        heat = Heatmap(np.clip(resized, 0.0, 1.0).astype(np.float32))

    centered = (
        np.floor(255.0 * heat.values.astype(np.float64) + 0.5) - 127.0
    ).astype(np.int16)
    centered.setflags(write=False)

    target = crop_resize_trilabel(
        sample.target, BBox(0, 0, pw, ph), NET_RESOLUTION, NET_RESOLUTION
    )
    upsampling = max(1.0, NET_RESOLUTION / math.sqrt(trim_box.width * trim_box.height))
    return NetExample(
        input_patch=input_patch,
        input_heatmap=heat,
        centered_heatmap_channel=centered,
        target=target,
        loss_weight=1.0 / upsampling,
        category=sample.main_category,
        mean_pixel=tuple(float(c) for c in mean_pixel),
    )
