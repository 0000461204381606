"""Deterministic synthetic datasets and scenes used across the test suite."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from amodalforge.core import (
    BBox,
    BinaryMask,
    Image,
    bbox_of,
    dump_json,
    save_image,
    save_mask_png,
)

CATEGORIES = ("slab", "disc", "wedge")


def _shape_mask(kind: int, w: int, h: int, rng) -> np.ndarray:
    sw = int(rng.integers(26, 56))
    sh = int(rng.integers(22, 48))
    x0 = int(rng.integers(2, w - sw - 2))
    y0 = int(rng.integers(2, h - sh - 2))
    mask = np.zeros((h, w), dtype=bool)
    if kind == 0:
        mask[y0 : y0 + sh, x0 : x0 + sw] = True
    elif kind == 1:
        yy, xx = np.mgrid[0:h, 0:w]
        cx, cy = x0 + sw / 2, y0 + sh / 2
        mask[:] = ((xx - cx) / (sw / 2)) ** 2 + ((yy - cy) / (sh / 2)) ** 2 <= 1.0
    else:
        yy, xx = np.mgrid[0:sh, 0:sw]
        mask[y0 : y0 + sh, x0 : x0 + sw] = xx * sh <= yy * sw
    return mask


def _layout_image(rng, w: int, h: int):
    """Place 2-4 shapes; each must keep >= 60 visible pixels after later
    shapes (painted on top) occlude it."""
    for _ in range(200):
        n_inst = int(rng.integers(2, 5))
        shapes = [(int(rng.integers(3)), None) for _ in range(n_inst)]
        shapes = [(kind, _shape_mask(kind, w, h, rng)) for kind, _ in shapes]
        records = []
        ok = True
        for j, (kind, shape) in enumerate(shapes):
            later = np.zeros((h, w), dtype=bool)
            for _, covering in shapes[j + 1 :]:
                later |= covering
            modal = shape & ~later
            if int(modal.sum()) < 60:
                ok = False
                break
            records.append((kind, shape, modal))
        if ok:
            return records
    raise RuntimeError("could not lay out a synthetic image")


def write_manifest_tree(root: Path, images, categories=CATEGORIES) -> Path:
    """Serialize (image_id, pixels, [(category, bits, occluded)]) tuples to a
    manifest directory and return the manifest.json path."""
    root = Path(root)
    (root / "images").mkdir(parents=True, exist_ok=True)
    (root / "masks").mkdir(parents=True, exist_ok=True)
    entries = []
    total = np.zeros(3, dtype=np.float64)
    count = 0
    for image_id, pixels, instances in images:
        save_image(Image(pixels), root / "images" / f"{image_id}.png")
        total += pixels.reshape(-1, 3).sum(axis=0)
        count += pixels.shape[0] * pixels.shape[1]
        inst_entries = []
        for j, (category, bits, occluded) in enumerate(instances):
            mask_path = f"masks/{image_id}_{j}.png"
            save_mask_png(BinaryMask(bits), root / mask_path)
            record = {"category": category, "mask_path": mask_path}
            if occluded is not None:
                record["occluded"] = occluded
            inst_entries.append(record)
        entries.append(
            {"id": image_id, "path": f"images/{image_id}.png", "instances": inst_entries}
        )
    mean_pixel = (total / max(count, 1)).round(4).tolist()
    manifest_path = root / "manifest.json"
    dump_json(
        {"mean_pixel": mean_pixel, "categories": list(categories), "images": entries},
        manifest_path,
    )
    return manifest_path


def build_manifest_tree(root: Path, n_images: int = 12, seed: int = 7) -> Path:
    """The bundled-style synthetic dataset: layered rectangles, ellipses and
    wedges over a noisy gradient, with modal masks and occlusion flags."""
    rng = np.random.default_rng(seed)
    images = []
    for i in range(n_images):
        w = int(rng.integers(150, 190))
        h = int(rng.integers(110, 140))
        records = _layout_image(rng, w, h)
        gradient = np.linspace(30, 90, h, dtype=np.float64)[:, None, None]
        pixels = np.broadcast_to(gradient, (h, w, 3)).copy()
        for _, shape, _ in records:
            color = rng.integers(60, 221, size=3)
            pixels[shape] = color
        pixels += rng.normal(0.0, 4.0, size=pixels.shape)
        pixels = np.clip(np.floor(pixels + 0.5), 0, 255).astype(np.uint8)
        instances = [
            (CATEGORIES[kind], modal, bool(modal.sum() < shape.sum()))
            for kind, shape, modal in records
        ]
        images.append((f"img_{i:02d}", pixels, instances))
    return write_manifest_tree(Path(root), images)


@dataclass(frozen=True)
class Scene:
    """A single object with known amodal truth, optionally partly occluded."""

    image: Image
    truth: BinaryMask
    visible: BinaryMask
    modal_box: BBox
    occluded: bool


def build_scene(seed: int, size: int = 128, force_occluded: bool | None = None) -> Scene:
    """One object (rectangle or ellipse) on a flat background; when occluded,
    a rectangle hides 15-65% of it from one side."""
    rng = np.random.default_rng(seed)
    for _ in range(200):
        sw = int(rng.integers(44, 85))
        sh = int(rng.integers(40, 77))
        x0 = int(rng.integers(6, size - sw - 5))
        y0 = int(rng.integers(6, size - sh - 5))
        truth = np.zeros((size, size), dtype=bool)
        if rng.integers(2) == 0:
            truth[y0 : y0 + sh, x0 : x0 + sw] = True
        else:
            yy, xx = np.mgrid[0:size, 0:size]
            cx, cy = x0 + sw / 2, y0 + sh / 2
            truth[:] = ((xx - cx) / (sw / 2)) ** 2 + ((yy - cy) / (sh / 2)) ** 2 <= 1.0

        occluded = (
            force_occluded if force_occluded is not None else bool(rng.integers(2))
        )
        occ = np.zeros((size, size), dtype=bool)
        if occluded:
            frac = rng.uniform(0.25, 0.6)
            side = int(rng.integers(4))
            pad = 4
            if side == 0:
                occ_box = BBox(max(0, x0 - pad), max(0, y0 - pad),
                               x0 + max(1, int(frac * sw)), min(size, y0 + sh + pad))
            elif side == 1:
                occ_box = BBox(x0 + sw - max(1, int(frac * sw)), max(0, y0 - pad),
                               min(size, x0 + sw + pad), min(size, y0 + sh + pad))
            elif side == 2:
                occ_box = BBox(max(0, x0 - pad), max(0, y0 - pad),
                               min(size, x0 + sw + pad), y0 + max(1, int(frac * sh)))
            else:
                occ_box = BBox(max(0, x0 - pad), y0 + sh - max(1, int(frac * sh)),
                               min(size, x0 + sw + pad), min(size, y0 + sh + pad))
            occ[occ_box.y0 : occ_box.y1, occ_box.x0 : occ_box.x1] = True

        visible = truth & ~occ
        n_visible, n_truth = int(visible.sum()), int(truth.sum())
        if n_truth == 0 or n_visible == 0:
            continue
        if occluded and not 0.35 <= n_visible / n_truth <= 0.85:
            continue

        pixels = np.full((size, size, 3), 36, dtype=np.uint8)
        pixels[truth] = (205, 180, 60)
        pixels[occ] = (70, 110, 190)
        return Scene(
            image=Image(pixels),
            truth=BinaryMask(truth),
            visible=BinaryMask(visible),
            modal_box=bbox_of(BinaryMask(visible)),
            occluded=occluded,
        )
    raise RuntimeError("could not build a scene")
