"""Newline-delimited JSON wire protocol for out-of-process heatmap predictors.

One frame per line. The parent writes ``predict`` frames to the backend's
standard input and reads ``heatmap`` frames from its standard output; the
backend announces itself with a ``hello`` frame on startup and exits after a
``shutdown`` frame. Pixel payloads travel as base64: raw RGB bytes for
patches, little-endian float32 for heatmaps, both row-major.

Encoding is canonical (fixed key order, compact separators) so that
``encode_frame(decode_frame(line)) == line`` for every well-formed line.
Decoding is strict: unknown keys, missing keys, wrong types, or payload
lengths that disagree with the declared dimensions all raise ProtocolError.
"""

from __future__ import annotations

import base64
import binascii
import json
import queue
import shlex
import subprocess
import threading
from dataclasses import dataclass
from typing import Sequence, Union

import numpy as np

PROTOCOL_VERSION = 1
DEFAULT_TIMEOUT = 30.0


class ProtocolError(Exception):
    """A frame violated the wire format."""


class BackendUnavailableError(Exception):
    """The backend process could not be started or ended the conversation."""


class BackendTimeoutError(Exception):
    """The backend did not produce a frame within the allowed time."""


@dataclass(frozen=True)
class HelloFrame:
    protocol: int
    margin_frac: float

    def __post_init__(self):
        if self.protocol != PROTOCOL_VERSION:
            raise ProtocolError(f"unsupported protocol version {self.protocol!r}")
        if not 0.0 <= self.margin_frac < 0.5:
            raise ProtocolError(f"margin_frac must be in [0, 0.5), got {self.margin_frac!r}")


@dataclass(frozen=True)
class PredictFrame:
    request_id: int
    category: str
    patch: np.ndarray  # (h, w, 3) uint8
    heatmap: np.ndarray  # (h, w) float32 in [0, 1]

    def __post_init__(self):
        _check_id(self.request_id)
        if not isinstance(self.category, str) or not self.category:
            raise ProtocolError("category must be a non-empty string")
        if self.patch.dtype != np.uint8 or self.patch.ndim != 3 or self.patch.shape[2] != 3:
            raise ProtocolError("patch must be (h, w, 3) uint8")
        if self.heatmap.dtype != np.float32 or self.heatmap.shape != self.patch.shape[:2]:
            raise ProtocolError("heatmap must be float32 with the patch's spatial dims")
        _check_unit_range(self.heatmap)


@dataclass(frozen=True)
class HeatmapFrame:
    request_id: int
    values: np.ndarray  # (h, w) float32 in [0, 1]

    def __post_init__(self):
        _check_id(self.request_id)
        if self.values.dtype != np.float32 or self.values.ndim != 2:
            raise ProtocolError("values must be a 2-D float32 array")
        _check_unit_range(self.values)


@dataclass(frozen=True)
class ShutdownFrame:
    pass


Frame = Union[HelloFrame, PredictFrame, HeatmapFrame, ShutdownFrame]


def _check_id(request_id):
    if isinstance(request_id, bool) or not isinstance(request_id, int) or request_id < 0:
        raise ProtocolError(f"id must be a non-negative integer, got {request_id!r}")


def _check_unit_range(values):
    if not np.isfinite(values).all():
        raise ProtocolError("heatmap values must be finite")
    if values.size and (values.min() < 0.0 or values.max() > 1.0):
        raise ProtocolError("heatmap values must lie in [0, 1]")


def encode_frame(frame: Frame) -> str:
    """Serialize a frame to its canonical single-line JSON form (no newline)."""
    if isinstance(frame, HelloFrame):
        obj = {"type": "hello", "protocol": frame.protocol, "margin_frac": frame.margin_frac}
    elif isinstance(frame, PredictFrame):
        h, w = frame.patch.shape[:2]
        obj = {
            "type": "predict",
            "id": frame.request_id,
            "category": frame.category,
            "width": w,
            "height": h,
            "patch_b64": _b64(np.ascontiguousarray(frame.patch).tobytes()),
            "heatmap_b64": _b64(frame.heatmap.astype("<f4").tobytes()),
        }
    elif isinstance(frame, HeatmapFrame):
        h, w = frame.values.shape
        obj = {
            "type": "heatmap",
            "id": frame.request_id,
            "width": w,
            "height": h,
            "values_b64": _b64(frame.values.astype("<f4").tobytes()),
        }
    elif isinstance(frame, ShutdownFrame):
        obj = {"type": "shutdown"}
    else:
        raise TypeError(f"not a frame: {frame!r}")
    return json.dumps(obj, separators=(",", ":"))


def decode_frame(line: str) -> Frame:
    """Parse one wire line; raises ProtocolError on any deviation."""
    try:
        obj = json.loads(line)
    except ValueError as exc:
        raise ProtocolError(f"frame is not valid JSON: {exc}") from None
    if not isinstance(obj, dict):
        raise ProtocolError("frame must be a JSON object")
    kind = obj.get("type")
    if kind == "hello":
        _exact_keys(obj, ("type", "protocol", "margin_frac"))
        return HelloFrame(protocol=_as_int(obj["protocol"], "protocol"),
                          margin_frac=_as_fraction(obj["margin_frac"]))
    if kind == "predict":
        _exact_keys(obj, ("type", "id", "category", "width", "height",
                          "patch_b64", "heatmap_b64"))
        w = _as_dim(obj["width"], "width")
        h = _as_dim(obj["height"], "height")
        patch = np.frombuffer(
            _payload(obj["patch_b64"], "patch_b64", h * w * 3), dtype=np.uint8
        ).reshape(h, w, 3)
        heat = np.frombuffer(
            _payload(obj["heatmap_b64"], "heatmap_b64", h * w * 4), dtype="<f4"
        ).reshape(h, w).astype(np.float32)
        return PredictFrame(request_id=_as_int(obj["id"], "id"),
                            category=obj["category"], patch=patch, heatmap=heat)
    if kind == "heatmap":
        _exact_keys(obj, ("type", "id", "width", "height", "values_b64"))
        w = _as_dim(obj["width"], "width")
        h = _as_dim(obj["height"], "height")
        values = np.frombuffer(
            _payload(obj["values_b64"], "values_b64", h * w * 4), dtype="<f4"
        ).reshape(h, w).astype(np.float32)
        return HeatmapFrame(request_id=_as_int(obj["id"], "id"), values=values)
    if kind == "shutdown":
        _exact_keys(obj, ("type",))
        return ShutdownFrame()
    raise ProtocolError(f"unknown frame type {kind!r}")


def _b64(raw: bytes) -> str:
    return base64.b64encode(raw).decode("ascii")


def _exact_keys(obj, keys):
    expected = set(keys)
    got = set(obj)
    if got != expected:
        extra = sorted(got - expected)
        missing = sorted(expected - got)
        raise ProtocolError(f"bad frame keys (extra={extra}, missing={missing})")


def _as_int(value, name):
    if isinstance(value, bool) or not isinstance(value, int):
        raise ProtocolError(f"{name} must be an integer, got {value!r}")
    return value


def _as_dim(value, name):
    n = _as_int(value, name)
    if n < 1:
        raise ProtocolError(f"{name} must be positive, got {n}")
    return n


def _as_fraction(value):
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ProtocolError(f"margin_frac must be a number, got {value!r}")
    return float(value)


def _payload(value, name, expected_len):
    if not isinstance(value, str):
        raise ProtocolError(f"{name} must be a base64 string")
    try:
        raw = base64.b64decode(value, validate=True)
    except (binascii.Error, ValueError):
        raise ProtocolError(f"{name} is not valid base64") from None
    if len(raw) != expected_len:
        raise ProtocolError(f"{name} holds {len(raw)} bytes, expected {expected_len}")
    return raw


class WireClient:
    """Serialized request/response channel to one backend subprocess.

    Launches the command, waits for its hello frame, and then pairs each
    predict frame with the next heatmap frame by request id. One request is
    in flight at a time; a lock enforces that across threads.
    """

    def __init__(self, command: Union[str, Sequence[str]], timeout: float = DEFAULT_TIMEOUT):
        argv = shlex.split(command) if isinstance(command, str) else list(command)
        self._timeout = float(timeout)
        self._lock = threading.Lock()
        self._closed = False
        try:
            self._proc = subprocess.Popen(
                argv,
                stdin=subprocess.PIPE,
                stdout=subprocess.PIPE,
                text=True,
                encoding="utf-8",
                bufsize=1,
            )
        except OSError as exc:
            raise BackendUnavailableError(f"cannot launch backend {argv!r}: {exc}") from None
        self._lines: queue.Queue = queue.Queue()
        self._reader = threading.Thread(target=self._pump, daemon=True)
        self._reader.start()
        hello = self._recv_frame()
        if not isinstance(hello, HelloFrame):
            self._abandon()
            raise ProtocolError(f"expected hello frame, got {type(hello).__name__}")
        self.margin_frac = hello.margin_frac

    def _pump(self):
        try:
            for line in self._proc.stdout:
                self._lines.put(line)
        finally:
            self._lines.put(None)

    def _recv_frame(self) -> Frame:
        while True:
            try:
                line = self._lines.get(timeout=self._timeout)
            except queue.Empty:
                self._abandon()
                raise BackendTimeoutError(
                    f"backend produced no frame within {self._timeout} s"
                ) from None
            if line is None:
                raise BackendUnavailableError("backend closed its output stream")
            line = line.strip()
            if not line:
                continue
            try:
                return decode_frame(line)
            except ProtocolError:
                self._abandon()
                raise

    def request(self, frame: PredictFrame) -> HeatmapFrame:
        with self._lock:
            self._send(encode_frame(frame))
            resp = self._recv_frame()
        if not isinstance(resp, HeatmapFrame):
            self._abandon()
            raise ProtocolError(f"expected heatmap frame, got {type(resp).__name__}")
        if resp.request_id != frame.request_id:
            self._abandon()
            raise ProtocolError(
                f"response id {resp.request_id} does not echo request id {frame.request_id}"
            )
        return resp

    def _send(self, line: str):
        try:
            self._proc.stdin.write(line + "\n")
            self._proc.stdin.flush()
        except (BrokenPipeError, OSError, ValueError) as exc:
            raise BackendUnavailableError(f"backend pipe broken: {exc}") from None

    def close(self):
        if self._closed:
            return
        self._closed = True
        try:
            self._send(encode_frame(ShutdownFrame()))
            self._proc.stdin.close()
        except (BackendUnavailableError, OSError, ValueError):
            pass
        try:
            self._proc.wait(timeout=5)
        except subprocess.TimeoutExpired:
            self._proc.kill()
            self._proc.wait()

    def _abandon(self):
        """Tear down after a fault; the conversation cannot be resynchronized."""
        self._closed = True
        try:
            self._proc.kill()
            self._proc.wait()
        except OSError:
            pass

    def __enter__(self):
        return self

    def __exit__(self, *exc_info):
        self.close()
