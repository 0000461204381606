"""Pluggable amodal-heatmap predictors and iterative bounding-box expansion.

A predictor receives a 224x224 patch (the contents of the current amodal
box), a modal heatmap aligned to it, and a category; it answers with a
224x224 heatmap covering an expanded footprint that extends margin_frac per
side beyond the patch. The expansion loop reads the mean intensity in the
four margin strips and grows the box in every direction whose mean clears
the threshold, by exactly one margin width, until nothing grows, nothing can
grow, or the iteration cap is reached.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Optional, Sequence, Union

import numpy as np

from .core import (
    BBox,
    BinaryMask,
    BoxOutsideImageError,
    Heatmap,
    Image,
    crop_resize,
    crop_resize_mask,
    load_mask_png,
    resample_heatmap,
    threshold_heatmap,
)
from .datagen import NET_RESOLUTION, _round_half_up
from .protocol import (
    DEFAULT_TIMEOUT,
    PredictFrame,
    ProtocolError,
    WireClient,
)

DIRECTIONS = ("up", "down", "left", "right")

DEFAULT_MARGIN_FRAC = 0.125


class EmptyStripError(Exception):
    """The margin rounds to zero pixels at the raster resolution."""


@dataclass(frozen=True)
class PredictRequest:
    patch: Image
    modal_heatmap: Heatmap
    category: str
    request_id: int

    def __post_init__(self):
        net = (NET_RESOLUTION, NET_RESOLUTION)
        if (self.patch.height, self.patch.width) != net:
            raise ValueError(f"patch must be {net}, got {self.patch.pixels.shape[:2]}")
        if self.modal_heatmap.values.shape != net:
            raise ValueError(f"modal heatmap must be {net}, got {self.modal_heatmap.values.shape}")
        if isinstance(self.request_id, bool) or not isinstance(self.request_id, int) \
                or self.request_id < 0:
            raise ValueError(f"request_id must be a non-negative integer, got {self.request_id!r}")


@dataclass(frozen=True)
class PredictResponse:
    heatmap: Heatmap
    request_id: int

    def __post_init__(self):
        net = (NET_RESOLUTION, NET_RESOLUTION)
        if self.heatmap.values.shape != net:
            raise ValueError(f"response heatmap must be {net}, got {self.heatmap.values.shape}")


@dataclass(frozen=True)
class ExpansionParams:
    expansion_threshold: float = 0.1
    margin_frac: float = DEFAULT_MARGIN_FRAC
    amodal_mask_threshold: float = 0.7
    modal_mask_threshold: float = 0.8
    max_iterations: int = 20

    def __post_init__(self):
        for name in ("expansion_threshold", "amodal_mask_threshold", "modal_mask_threshold"):
            v = getattr(self, name)
            if not 0.0 < v < 1.0:
                raise ValueError(f"{name} must be in (0, 1), got {v!r}")
        if not 0.0 < self.margin_frac < 0.5:
            raise ValueError(f"margin_frac must be in (0, 0.5), got {self.margin_frac!r}")
        if self.max_iterations < 1:
            raise ValueError(f"max_iterations must be >= 1, got {self.max_iterations!r}")


@dataclass(frozen=True)
class ExpansionStep:
    """One expansion pass: the four margin means and what actually grew."""

    iteration: int
    margin_means: tuple  # (up, down, left, right)
    expanded: tuple  # (up, down, left, right) booleans
    box_after: BBox


@dataclass(frozen=True)
class ExpansionResult:
    amodal_box: BBox
    amodal_heatmap: Heatmap  # image-sized; zero outside the final footprint
    amodal_mask: BinaryMask  # image-sized
    modal_mask: BinaryMask  # image-sized
    iterations: int
    expansion_trace: tuple  # of ExpansionStep


def raster_margin(margin_frac: float, size: int = NET_RESOLUTION) -> int:
    """Margin width in response-raster pixels.

    The response spans the patch plus margin_frac per side, so of `size`
    raster pixels the margin takes size*margin_frac/(1+2*margin_frac).
    """
    return _round_half_up(size * margin_frac / (1.0 + 2.0 * margin_frac))


def margin_step(margin_frac: float, dim: int) -> int:
    """Image-pixel growth for one expansion on an axis of length dim."""
    return max(1, _round_half_up(margin_frac * dim))


def expanded_footprint(box: BBox, margin_frac: float) -> BBox:
    """The image-coordinate region a response over `box` covers (unclipped)."""
    if margin_frac == 0.0:
        return box
    sw = margin_step(margin_frac, box.width)
    sh = margin_step(margin_frac, box.height)
    return BBox(box.x0 - sw, box.y0 - sh, box.x1 + sw, box.y1 + sh)


def margin_mean_intensity(resp: Heatmap, margin_frac: float, direction: str) -> float:
    """Mean response value in one margin strip of the raster grid.

    Left/right strips span the full raster height; up/down strips span only
    the inner width, so each corner belongs to exactly one strip.
    """
    if direction not in DIRECTIONS:
        raise ValueError(f"direction must be one of {DIRECTIONS}, got {direction!r}")
    h, w = resp.values.shape
    mr = raster_margin(margin_frac, h)
    mc = raster_margin(margin_frac, w)
    if direction == "up":
        strip = resp.values[:mr, mc:w - mc]
    elif direction == "down":
        strip = resp.values[h - mr:, mc:w - mc]
    elif direction == "left":
        strip = resp.values[:, :mc]
    else:
        strip = resp.values[:, w - mc:]
    if strip.size == 0:
        raise EmptyStripError(
            f"{direction} margin is empty at margin_frac={margin_frac} on a {w}x{h} raster"
        )
    return float(strip.mean(dtype=np.float64))


class Predictor:
    """Base for in-process and wire backends.

    `footprint` is an in-process side channel: the loop passes the image
    region the response is expected to cover, which test doubles (the truth
    oracle) need and wire backends cannot see. Implementations that predict
    from pixels alone ignore it.
    """

    margin_frac: float = DEFAULT_MARGIN_FRAC

    def predict(self, req: PredictRequest, footprint: Optional[BBox] = None) -> PredictResponse:
        raise NotImplementedError

    def close(self):
        pass

    def __enter__(self):
        return self

    def __exit__(self, *exc_info):
        self.close()


class NullPredictor(Predictor):
    """Constant-zero field: never expands, predicts nothing."""

    def __init__(self, margin_frac: float = DEFAULT_MARGIN_FRAC):
        self.margin_frac = float(margin_frac)

    def predict(self, req, footprint=None):
        zeros = np.zeros((NET_RESOLUTION, NET_RESOLUTION), dtype=np.float32)
        return PredictResponse(heatmap=Heatmap(zeros), request_id=req.request_id)


class OraclePredictor(Predictor):
    """Rasterizes a known image-coordinate mask over the requested footprint.

    Stands in for a trained net when the full mask is known; requires the
    footprint side channel.
    """

    def __init__(self, truth: BinaryMask, margin_frac: float = DEFAULT_MARGIN_FRAC):
        if truth.count == 0:
            raise ValueError("oracle truth mask is empty")
        self.truth = truth
        self.margin_frac = float(margin_frac)

    def predict(self, req, footprint=None):
        if footprint is None:
            raise ValueError("oracle predictor needs the footprint side channel")
        bits = crop_resize_mask(self.truth, footprint, NET_RESOLUTION, NET_RESOLUTION).bits
        return PredictResponse(heatmap=Heatmap(bits.astype(np.float32)),
                               request_id=req.request_id)


class ModalCopyPredictor(Predictor):
    """Echoes the request's modal heatmap, zero-padded onto the margin."""

    def __init__(self, margin_frac: float = DEFAULT_MARGIN_FRAC):
        self.margin_frac = float(margin_frac)

    def predict(self, req, footprint=None):
        m = raster_margin(self.margin_frac)
        if m == 0:
            return PredictResponse(heatmap=req.modal_heatmap, request_id=req.request_id)
        inner = NET_RESOLUTION - 2 * m
        canvas = np.zeros((NET_RESOLUTION, NET_RESOLUTION), dtype=np.float32)
        canvas[m:m + inner, m:m + inner] = resample_heatmap(
            req.modal_heatmap, inner, inner
        ).values
        return PredictResponse(heatmap=Heatmap(canvas), request_id=req.request_id)


class ProcPredictor(Predictor):
    """Out-of-process backend speaking the NDJSON wire protocol.

    margin_frac comes from the backend's hello frame; the footprint side
    channel is ignored since a wire backend predicts from pixels alone.
    """

    def __init__(self, command: Union[str, Sequence[str]], timeout: float = DEFAULT_TIMEOUT):
        self._client = WireClient(command, timeout=timeout)
        self.margin_frac = self._client.margin_frac

    def predict(self, req, footprint=None):
        frame = PredictFrame(
            request_id=req.request_id,
            category=req.category,
            patch=req.patch.pixels,
            heatmap=req.modal_heatmap.values,
        )
        resp = self._client.request(frame)
        if resp.values.shape != (NET_RESOLUTION, NET_RESOLUTION):
            raise ProtocolError(
                f"backend answered a {resp.values.shape} heatmap, expected "
                f"{NET_RESOLUTION}x{NET_RESOLUTION}"
            )
        return PredictResponse(heatmap=Heatmap(resp.values), request_id=req.request_id)

    def close(self):
        self._client.close()


def resolve_backend(spec: str, *, margin_frac: float = DEFAULT_MARGIN_FRAC,
                    timeout: float = DEFAULT_TIMEOUT) -> Predictor:
    """Build a predictor from its command-line spelling.

    `null`, `oracle:<mask.png>`, and `modal-copy` run in-process with the
    given margin_frac; `proc:<command>` launches a subprocess whose hello
    frame declares its own.
    """
    if spec == "null":
        return NullPredictor(margin_frac=margin_frac)
    if spec == "modal-copy":
        return ModalCopyPredictor(margin_frac=margin_frac)
    if spec.startswith("oracle:"):
        path = spec[len("oracle:"):]
        if not path:
            raise ValueError("oracle backend needs a mask path: oracle:<mask.png>")
        return OraclePredictor(load_mask_png(path), margin_frac=margin_frac)
    if spec.startswith("proc:"):
        command = spec[len("proc:"):]
        if not command.strip():
            raise ValueError("proc backend needs a command: proc:<command>")
        return ProcPredictor(command, timeout=timeout)
    raise ValueError(f"unknown backend spec {spec!r}")


def _neutral_channel() -> Heatmap:
    return Heatmap(np.full((NET_RESOLUTION, NET_RESOLUTION), 0.5, dtype=np.float32))


def _modal_channel(image: Image, box: BBox, category: str,
                   modal_backend: Optional[Predictor], ids) -> Heatmap:
    """224x224 modal heatmap aligned to `box`; constant 0.5 without a backend."""
    if modal_backend is None:
        return _neutral_channel()
    patch = crop_resize(image, box, NET_RESOLUTION, NET_RESOLUTION)
    req = PredictRequest(patch=patch, modal_heatmap=_neutral_channel(),
                         category=category, request_id=next(ids))
    resp = modal_backend.predict(req, footprint=expanded_footprint(box, modal_backend.margin_frac))
    m = raster_margin(modal_backend.margin_frac)
    if m == 0:
        return resp.heatmap
    inner = resp.heatmap.values[m:NET_RESOLUTION - m, m:NET_RESOLUTION - m]
    return resample_heatmap(Heatmap(inner), NET_RESOLUTION, NET_RESOLUTION)


def _paste_over(image: Image, region: BBox, values: Heatmap) -> Heatmap:
    """Resample `values` onto `region` of an image-sized zero canvas."""
    canvas = np.zeros((image.height, image.width), dtype=np.float32)
    resampled = resample_heatmap(values, region.width, region.height)
    visible = region.intersect(BBox(0, 0, image.width, image.height))
    if visible is not None:
        canvas[visible.y0:visible.y1, visible.x0:visible.x1] = resampled.values[
            visible.y0 - region.y0:visible.y1 - region.y0,
            visible.x0 - region.x0:visible.x1 - region.x0,
        ]
    return Heatmap(canvas)


def expand_amodal_box(image: Image, modal_box: BBox, category: str,
                      backend: Predictor, params: ExpansionParams = ExpansionParams(),
                      modal_backend: Optional[Predictor] = None) -> ExpansionResult:
    """Grow the modal box into the full (amodal) extent of the object.

    Each pass crops the current box, obtains the modal channel, asks the
    backend for the expanded-footprint heatmap, and grows the box on every
    side whose margin strip's mean exceeds the threshold, by one margin
    width, clipped to the image. The final pass's heatmap defines the masks.
    """
    if backend.margin_frac != params.margin_frac:
        raise ValueError(
            f"backend declares margin_frac={backend.margin_frac}, "
            f"params expect {params.margin_frac}"
        )
    img_box = BBox(0, 0, image.width, image.height)
    start = modal_box.intersect(img_box)
    if start is None:
        raise BoxOutsideImageError(f"modal box {modal_box} lies outside the image")
    ids = itertools.count()
    box = start
    trace = []
    first_modal_channel = None
    while True:
        patch = crop_resize(image, box, NET_RESOLUTION, NET_RESOLUTION)
        modal_heat = _modal_channel(image, box, category, modal_backend, ids)
        if first_modal_channel is None:
            first_modal_channel = modal_heat
        req = PredictRequest(patch=patch, modal_heatmap=modal_heat,
                             category=category, request_id=next(ids))
        resp = backend.predict(req, footprint=expanded_footprint(box, params.margin_frac))
        means = tuple(
            margin_mean_intensity(resp.heatmap, params.margin_frac, d) for d in DIRECTIONS
        )
        at_border = (box.y0 == 0, box.y1 == image.height,
                     box.x0 == 0, box.x1 == image.width)
        grows = tuple(
            mean > params.expansion_threshold and not blocked
            for mean, blocked in zip(means, at_border)
        )
        if not any(grows) or len(trace) == params.max_iterations:
            break
        sh = margin_step(params.margin_frac, box.height)
        sw = margin_step(params.margin_frac, box.width)
        grown = BBox(
            box.x0 - sw if grows[2] else box.x0,
            box.y0 - sh if grows[0] else box.y0,
            box.x1 + sw if grows[3] else box.x1,
            box.y1 + sh if grows[1] else box.y1,
        )
        box = grown.intersect(img_box)
        trace.append(ExpansionStep(iteration=len(trace) + 1, margin_means=means,
                                   expanded=grows, box_after=box))

    amodal_heat = _paste_over(image, expanded_footprint(box, params.margin_frac), resp.heatmap)
    amodal_mask = threshold_heatmap(amodal_heat, params.amodal_mask_threshold)
    modal_heat_full = _paste_over(image, start, first_modal_channel)
    modal_mask = threshold_heatmap(modal_heat_full, params.modal_mask_threshold)
    return ExpansionResult(
        amodal_box=box,
        amodal_heatmap=amodal_heat,
        amodal_mask=amodal_mask,
        modal_mask=modal_mask,
        iterations=len(trace),
        expansion_trace=tuple(trace),
    )
