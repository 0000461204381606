"""Wire format: canonical encoding, strict decoding, subprocess client."""

import pathlib
import sys

import numpy as np
import pytest

from amodalforge.protocol import (
    BackendTimeoutError,
    BackendUnavailableError,
    HeatmapFrame,
    HelloFrame,
    PredictFrame,
    ProtocolError,
    ShutdownFrame,
    WireClient,
    decode_frame,
    encode_frame,
)

FIXTURES = pathlib.Path(__file__).parent / "fixtures" / "protocol_frames.ndjson"
STUB = pathlib.Path(__file__).parent / "stub_backend.py"


def _stub_cmd(*args):
    return [sys.executable, str(STUB), *args]


def _tiny_predict():
    patch = np.array([[[1, 2, 3]]], dtype=np.uint8)
    heat = np.array([[0.5]], dtype=np.float32)
    return PredictFrame(request_id=7, category="disc", patch=patch, heatmap=heat)


# ---------------------------------------------------------------------------
# Canonical encoding


def test_encode_predict_frame_canonical_bytes():
    line = encode_frame(_tiny_predict())
    assert line == (
        '{"type":"predict","id":7,"category":"disc","width":1,"height":1,'
        '"patch_b64":"AQID","heatmap_b64":"AAAAPw=="}'
    )


def test_encode_hello_and_shutdown_canonical_bytes():
    assert encode_frame(HelloFrame(1, 0.125)) == \
        '{"type":"hello","protocol":1,"margin_frac":0.125}'
    assert encode_frame(ShutdownFrame()) == '{"type":"shutdown"}'


def test_encode_heatmap_frame_canonical_bytes():
    vals = np.array([[0.0], [1.0]], dtype=np.float32)
    line = encode_frame(HeatmapFrame(request_id=3, values=vals))
    assert line == (
        '{"type":"heatmap","id":3,"width":1,"height":2,"values_b64":"AAAAAAAAgD8="}'
    )


def test_round_trip_every_frame_type():
    rng = np.random.default_rng(5)
    patch = rng.integers(0, 256, size=(4, 6, 3), dtype=np.uint8)
    heat = rng.random((4, 6)).astype(np.float32)
    frames = [
        HelloFrame(1, 0.25),
        PredictFrame(request_id=0, category="horse", patch=patch, heatmap=heat),
        HeatmapFrame(request_id=0, values=heat),
        ShutdownFrame(),
    ]
    for frame in frames:
        line = encode_frame(frame)
        back = decode_frame(line)
        assert encode_frame(back) == line
    back = decode_frame(encode_frame(frames[1]))
    assert (back.patch == patch).all()
    assert (back.heatmap == heat).all()


def test_golden_fixtures_round_trip():
    lines = FIXTURES.read_text().splitlines()
    assert len(lines) == 20
    kinds = set()
    for line in lines:
        frame = decode_frame(line)
        kinds.add(type(frame).__name__)
        assert encode_frame(frame) == line
    assert kinds == {"HelloFrame", "PredictFrame", "HeatmapFrame", "ShutdownFrame"}


# ---------------------------------------------------------------------------
# Strict decoding

GOOD_PREDICT = (
    '{"type":"predict","id":7,"category":"disc","width":1,"height":1,'
    '"patch_b64":"AQID","heatmap_b64":"AAAAPw=="}'
)

BAD_LINES = [
    "not json",
    "[1,2,3]",
    '{"type":"teapot"}',
    '{"no_type":1}',
    '{"type":"shutdown","extra":1}',
    '{"type":"hello","protocol":1}',
    '{"type":"hello","protocol":2,"margin_frac":0.125}',
    '{"type":"hello","protocol":1,"margin_frac":0.5}',
    '{"type":"hello","protocol":1,"margin_frac":-0.1}',
    '{"type":"hello","protocol":1,"margin_frac":true}',
    '{"type":"hello","protocol":true,"margin_frac":0.125}',
    GOOD_PREDICT.replace('"id":7', '"id":true'),
    GOOD_PREDICT.replace('"id":7', '"id":-1'),
    GOOD_PREDICT.replace('"id":7', '"id":7.0'),
    GOOD_PREDICT.replace('"width":1', '"width":0'),
    GOOD_PREDICT.replace('"width":1', '"width":2'),  # payload length mismatch
    GOOD_PREDICT.replace('"patch_b64":"AQID"', '"patch_b64":"!!!"'),
    GOOD_PREDICT.replace('"patch_b64":"AQID"', '"patch_b64":7'),
    GOOD_PREDICT.replace('"category":"disc"', '"category":""'),
    GOOD_PREDICT.replace('"category":"disc"', '"category":4'),
    GOOD_PREDICT[:-1] + ',"surplus":0}',
    # heatmap value 2.0 > 1: struct '<f' of 2.0 is 00 00 00 40
    GOOD_PREDICT.replace("AAAAPw==", "AAAAQA=="),
    # NaN payload: 00 00 c0 7f
    GOOD_PREDICT.replace("AAAAPw==", "AADAfw=="),
    '{"type":"heatmap","id":1,"width":1,"height":1}',
    '{"type":"heatmap","id":1,"width":1,"height":1,"values_b64":"AAAAPw==","x":1}',
]


@pytest.mark.parametrize("line", BAD_LINES)
def test_decode_rejects_malformed(line):
    with pytest.raises(ProtocolError):
        decode_frame(line)


def test_decode_accepts_any_key_order():
    frame = decode_frame('{"margin_frac":0.125,"protocol":1,"type":"hello"}')
    assert frame == HelloFrame(1, 0.125)


# ---------------------------------------------------------------------------
# Subprocess client


def test_wire_client_request_response():
    with WireClient(_stub_cmd("--mode", "ok", "--value", "0.25")) as client:
        assert client.margin_frac == 0.125
        resp = client.request(_tiny_predict())
        assert resp.request_id == 7
        assert resp.values.shape == (1, 1)
        assert resp.values[0, 0] == np.float32(0.25)


def test_wire_client_copy_backend_echoes_heatmap():
    rng = np.random.default_rng(11)
    patch = rng.integers(0, 256, size=(5, 4, 3), dtype=np.uint8)
    heat = rng.random((5, 4)).astype(np.float32)
    with WireClient(_stub_cmd("--mode", "copy", "--margin", "0.2")) as client:
        assert client.margin_frac == 0.2
        resp = client.request(PredictFrame(0, "slab", patch, heat))
        assert (resp.values == heat).all()


def test_wire_client_clean_shutdown():
    client = WireClient(_stub_cmd("--mode", "ok"))
    client.request(_tiny_predict())
    client.close()
    assert client._proc.returncode == 0
    client.close()  # idempotent


def test_wire_client_rejects_bad_hello():
    with pytest.raises(ProtocolError):
        WireClient(_stub_cmd("--mode", "bad-hello"))


def test_wire_client_rejects_mismatched_id():
    with WireClient(_stub_cmd("--mode", "wrong-id")) as client:
        with pytest.raises(ProtocolError, match="echo"):
            client.request(_tiny_predict())


def test_wire_client_dead_backend():
    with pytest.raises(BackendUnavailableError):
        WireClient(_stub_cmd("--mode", "die"))


def test_wire_client_missing_executable():
    with pytest.raises(BackendUnavailableError):
        WireClient(["/no/such/binary"])


def test_wire_client_timeout():
    with WireClient(_stub_cmd("--mode", "silent"), timeout=0.75) as client:
        with pytest.raises(BackendTimeoutError):
            client.request(_tiny_predict())


def test_frame_validation_rejects_bad_payloads():
    with pytest.raises(ProtocolError):
        HelloFrame(1, 0.5)
    with pytest.raises(ProtocolError):
        HeatmapFrame(1, np.array([[1.5]], dtype=np.float32))
    with pytest.raises(ProtocolError):
        HeatmapFrame(True, np.array([[0.5]], dtype=np.float32))
    with pytest.raises(ProtocolError):
        PredictFrame(0, "x", np.zeros((2, 2, 3), np.uint8), np.zeros((3, 2), np.float32))
