import json
from pathlib import Path

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from splatspace.wire import (
    MAX_FRAME_BYTES,
    MESSAGE_SCHEMAS,
    FrameDecoder,
    FrameTooLarge,
    Message,
    ProtocolError,
    decode_payload,
    encode_message,
    protocol_markdown,
)

GOLDEN_DIR = Path(__file__).parent / "golden"


def _roundtrip(msg: Message) -> Message:
    frame = encode_message(msg)
    decoder = FrameDecoder()
    [out] = decoder.feed(frame)
    return out


def test_roundtrip_each_message_type():
    for name in MESSAGE_SCHEMAS:
        msg = Message(name, {"payload": [1, "two", {"three": 3.0}]}, seq=9)
        assert _roundtrip(msg) == msg


def test_unknown_type_preserved():
    msg = Message("from_the_future", {"x": 1})
    assert _roundtrip(msg) == msg


def test_encoding_is_canonical():
    a = encode_message(Message("op", {"b": 1, "a": 2}, seq=1))
    b = encode_message(Message("op", {"a": 2, "b": 1}, seq=1))
    assert a == b


def test_reserved_body_keys_rejected():
    with pytest.raises(ProtocolError):
        encode_message(Message("op", {"type": "sneaky"}))


def test_oversize_declared_length():
    decoder = FrameDecoder()
    with pytest.raises(FrameTooLarge):
        decoder.feed((MAX_FRAME_BYTES + 1).to_bytes(4, "big") + b"xx")


def test_truncated_frame_waits_for_more_bytes():
    frame = encode_message(Message("ping", {"nonce": 5}, seq=1))
    decoder = FrameDecoder()
    assert decoder.feed(frame[:3]) == []
    assert decoder.feed(frame[3:10]) == []
    [msg] = decoder.feed(frame[10:])
    assert msg.body["nonce"] == 5
    assert decoder.pending_bytes == 0


def test_malformed_payloads():
    with pytest.raises(ProtocolError):
        decode_payload(b"not json")
    with pytest.raises(ProtocolError):
        decode_payload(b"[1,2,3]")
    with pytest.raises(ProtocolError):
        decode_payload(b'{"seq": 1}')
    with pytest.raises(ProtocolError):
        decode_payload(b'{"type": "op", "seq": "one"}')


# ---------------------------------------------------------------------------
# golden corpus: protocol freeze


def _golden():
    blob = (GOLDEN_DIR / "frames.bin").read_bytes()
    expected = json.loads((GOLDEN_DIR / "frames.json").read_text())
    return blob, expected


def test_golden_frames_decode_bit_exactly():
    blob, expected = _golden()
    decoder = FrameDecoder()
    messages = decoder.feed(blob)
    assert decoder.pending_bytes == 0
    assert len(messages) == len(expected)
    for msg, want in zip(messages, expected):
        assert msg.type == want["type"]
        assert msg.seq == want["seq"]
        assert msg.body == want["body"]
    # re-encoding reproduces the corpus byte for byte
    assert b"".join(encode_message(m) for m in messages) == blob


@given(st.data())
@settings(max_examples=60, deadline=None)
def test_golden_stream_survives_arbitrary_splits(data):
    blob, expected = _golden()
    cuts = sorted(data.draw(st.lists(st.integers(0, len(blob)), max_size=12)))
    decoder = FrameDecoder()
    messages = []
    prev = 0
    for cut in cuts + [len(blob)]:
        messages.extend(decoder.feed(blob[prev:cut]))
        prev = cut
    assert len(messages) == len(expected)


@given(st.integers(0, 10_000), st.binary(max_size=64))
@settings(max_examples=80, deadline=None)
def test_truncation_and_garbage_never_crash_decoder(cut, garbage):
    blob, _ = _golden()
    stream = blob[:min(cut, len(blob))] + garbage
    decoder = FrameDecoder()
    try:
        decoder.feed(stream)
    except ProtocolError:
        pass   # typed rejection is fine; anything else would fail the test


def test_protocol_docs_are_fresh():
    generated = protocol_markdown() + "\n"
    on_disk = (Path(__file__).parents[1] / "docs" / "protocol.md").read_text()
    assert on_disk == generated, "run scripts/gen_protocol_docs.py"


def test_non_finite_rejected_both_directions():
    with pytest.raises(ProtocolError, match="NaN"):
        decode_payload(b'{"type": "op", "factor": NaN}')
    with pytest.raises(ProtocolError, match="Infinity"):
        decode_payload(b'{"type": "op", "factor": Infinity}')
    with pytest.raises(ProtocolError):
        encode_message(Message("op", {"factor": float("nan")}))
