"""Frame and message codec: 4-byte big-endian length prefix + UTF-8 JSON.

Messages are a flat JSON object with a required ``type``, an optional
``seq`` (client-assigned on requests, echoed on replies), and type-specific
fields.  Encoding is canonical (sorted keys, compact separators), which is
what freezes the golden-frame corpus.  Unknown types decode fine and
re-encode bit-exactly, for forward compatibility.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field

MAX_FRAME_BYTES = 16 * 1024 * 1024
_LEN = struct.Struct(">I")

_RESERVED = ("type", "seq")


class ProtocolError(ValueError):
    """Frame or message violates the protocol; connections close on this."""


class FrameTooLarge(ProtocolError):
    """Declared frame length exceeds the 16 MiB cap."""


@dataclass(frozen=True)
class Message:
    type: str
    body: dict = field(default_factory=dict)
    seq: int | None = None


def encode_message(msg: Message) -> bytes:
    """Message -> length-prefixed frame bytes."""
    for key in _RESERVED:
        if key in msg.body:
            raise ProtocolError(f"body may not contain reserved key {key!r}")
    record: dict = {"type": msg.type, **msg.body}
    if msg.seq is not None:
        record["seq"] = msg.seq
    try:
        payload = json.dumps(record, sort_keys=True, separators=(",", ":"),
                             allow_nan=False).encode("utf-8")
    except ValueError as exc:
        raise ProtocolError(f"body not strict-JSON encodable: {exc}") from None
    if len(payload) > MAX_FRAME_BYTES:
        raise FrameTooLarge(f"payload of {len(payload)} bytes exceeds {MAX_FRAME_BYTES}")
    return _LEN.pack(len(payload)) + payload


def _reject_constant(name: str):
    raise ProtocolError(f"non-finite JSON literal {name!r} not allowed on the wire")


def decode_payload(payload: bytes) -> Message:
    """Frame payload (JSON bytes, prefix stripped) -> Message."""
    try:
        record = json.loads(payload.decode("utf-8"), parse_constant=_reject_constant)
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ProtocolError(f"malformed JSON payload: {exc}") from None
    if not isinstance(record, dict):
        raise ProtocolError("message must be a JSON object")
    msg_type = record.pop("type", None)
    if not isinstance(msg_type, str):
        raise ProtocolError("message missing string 'type'")
    seq = record.pop("seq", None)
    if seq is not None and not isinstance(seq, int):
        raise ProtocolError("'seq' must be an integer when present")
    return Message(type=msg_type, body=record, seq=seq)


class FrameDecoder:
    """Incremental decoder; feed() returns every message completed so far.

    Partial frames simply wait for more bytes; an oversized declared length
    raises FrameTooLarge immediately.
    """

    def __init__(self):
        self._buf = bytearray()

    def feed(self, data: bytes) -> list[Message]:
        self._buf.extend(data)
        out = []
        while True:
            if len(self._buf) < 4:
                return out
            (length,) = _LEN.unpack(bytes(self._buf[:4]))
            if length > MAX_FRAME_BYTES:
                raise FrameTooLarge(f"declared frame length {length} exceeds {MAX_FRAME_BYTES}")
            if len(self._buf) < 4 + length:
                return out
            payload = bytes(self._buf[4:4 + length])
            del self._buf[:4 + length]
            out.append(decode_payload(payload))

    @property
    def pending_bytes(self) -> int:
        return len(self._buf)


# ---------------------------------------------------------------------------
# Message vocabulary: the single source of truth behind docs/protocol.md.

MESSAGE_SCHEMAS: dict[str, dict] = {
    "hello": {
        "direction": "client → server",
        "purpose": "Handshake; must be the first message on a connection.",
        "fields": [
            ("user", "string", "user id joining the session"),
            ("session", "string", "session id (created on first join)"),
            ("pose", "transform?", "optional avatar pose used for default object placement"),
        ],
    },
    "welcome": {
        "direction": "server → client",
        "purpose": "Handshake reply carrying the authoritative state.",
        "fields": [
            ("revision", "int", "session revision the state reflects"),
            ("full_state", "object", "complete session state (own pie menu only)"),
            ("session", "string", "session id"),
            ("user", "string", "echoed user id"),
        ],
    },
    "op": {
        "direction": "both",
        "purpose": "Session mutation request; the reply (same type) acknowledges it. "
                   "The non-mutating kind 'preview' renders a frame without pinning.",
        "fields": [
            ("op", "string", "op kind: join/leave/create_object/grab/move/scale/release/"
                             "delete_object/snapshot/pin_view/move_pin/scale_pin/delete_pin/"
                             "open_pie_menu/toggle_pie_menu/preview"),
            ("...", "varies", "kind-specific fields (object_id, pin_id, transform, camera, uv, "
                              "factor, asset_id, view)"),
            ("status", "string", "reply only: 'ok'"),
            ("revision", "int", "reply only: revision after the applied op"),
            ("flags", "[string]", "reply only: e.g. clamp_applied"),
            ("preview_png", "b64png?", "reply only: rendered frame for preview ops"),
        ],
    },
    "delta": {
        "direction": "server → client",
        "purpose": "Broadcast of one applied op; revisions arrive gap-free per client.",
        "fields": [
            ("revision", "int", "revision this delta produces"),
            ("kind", "string", "op kind that caused it"),
            ("actor", "string", "user who issued the op"),
            ("objects", "{id: object|null}", "changed shared objects (null = deleted)"),
            ("pins", "{id: pin|null}", "changed whiteboard pins (null = deleted)"),
            ("users", "{id: user|null}", "joined/left users"),
            ("flags", "[string]", "informational flags, e.g. clamp_applied, auto_release"),
            ("menus", "{user: menu|null}?", "recipient's own pie menu changes, never others'"),
            ("pin_images", "{id: b64png}?", "rendered payloads for new pins"),
            ("menu_images", "{view: b64png}?", "pie menu view renders, owner copy only"),
        ],
    },
    "job_submit": {
        "direction": "client → server",
        "purpose": "Start a 2D→3D generation job from a frame and three points.",
        "fields": [
            ("image", "b64png", "the prompt frame"),
            ("points", "[[x,y]x3]", "exactly three in-bounds pixel points"),
            ("source", "string", "web_view | camera_feed | file"),
        ],
    },
    "job_confirm": {
        "direction": "client → server",
        "purpose": "Confirm a job parked at awaiting_confirmation.",
        "fields": [("job_id", "string", "job to advance")],
    },
    "job_reject": {
        "direction": "client → server",
        "purpose": "Discard a job parked at awaiting_confirmation.",
        "fields": [("job_id", "string", "job to discard")],
    },
    "job": {
        "direction": "server → client",
        "purpose": "Job lifecycle updates (reply to job_* plus pushed stage changes).",
        "fields": [
            ("job_id", "string", "job id"),
            ("stage", "string", "segmenting/awaiting_confirmation/multiview/fusing/done/failed"),
            ("payload", "object", "stage data: cutout_png at confirmation, asset_id when done, "
                                  "error when failed, timings_ms throughout"),
        ],
    },
    "fetch_asset": {
        "direction": "client → server",
        "purpose": "Fetch a splat asset by content hash (assets never ride in deltas).",
        "fields": [("asset_id", "string", "sha256 content hash")],
    },
    "asset": {
        "direction": "server → client",
        "purpose": "Asset payload reply.",
        "fields": [
            ("asset_id", "string", "echoed content hash"),
            ("ply", "b64bytes", "canonical .ply bytes"),
        ],
    },
    "resync": {
        "direction": "both",
        "purpose": "Catch up after a revision gap; reply carries the missing deltas "
                   "when the ring buffer still holds them, else the full state.",
        "fields": [
            ("from_revision", "int", "request: last revision the client applied"),
            ("deltas", "[delta]?", "reply: the exact missing deltas, oldest first"),
            ("full_state", "object?", "reply: complete state when the gap outruns the ring"),
            ("revision", "int?", "reply: revision of full_state"),
        ],
    },
    "error": {
        "direction": "server → client",
        "purpose": "Request failure (echoes seq) or protocol violation before close.",
        "fields": [
            ("code", "string", "protocol/unsupported_type/bad_op/unknown_id/grab_denied/"
                               "not_holder/invalid_camera/invalid_prompt/wrong_stage/"
                               "unknown_job/unknown_asset/backend_failure"),
            ("message", "string", "human-readable detail"),
        ],
    },
    "ping": {
        "direction": "client → server",
        "purpose": "Liveness probe.",
        "fields": [("nonce", "any?", "echoed back verbatim")],
    },
    "pong": {
        "direction": "server → client",
        "purpose": "Ping reply.",
        "fields": [("nonce", "any?", "echoed from the ping")],
    },
}


def protocol_markdown() -> str:
    """Render docs/protocol.md from MESSAGE_SCHEMAS."""
    lines = [
        "# Wire protocol",
        "",
        "Transport: a bidirectional byte stream carrying frames of "
        "`4-byte big-endian payload length + UTF-8 JSON payload`; "
        f"payloads are capped at {MAX_FRAME_BYTES} bytes (16 MiB). "
        "The same frames travel as binary messages over the optional WebSocket bridge.",
        "",
        "Every request gets exactly one reply (`seq` echoed) plus zero or more broadcasts; "
        "broadcast `delta` messages carry `revision` and arrive gap-free or trigger a resync.",
        "",
        "This file is generated from `splatspace.wire.MESSAGE_SCHEMAS` "
        "(`python3 scripts/gen_protocol_docs.py`); do not edit by hand.",
        "",
    ]
    for name, schema in MESSAGE_SCHEMAS.items():
        lines.append(f"## `{name}`")
        lines.append("")
        lines.append(f"*Direction:* {schema['direction']}")
        lines.append("")
        lines.append(schema["purpose"])
        lines.append("")
        lines.append("| field | type | meaning |")
        lines.append("|---|---|---|")
        for fname, ftype, desc in schema["fields"]:
            lines.append(f"| `{fname}` | {ftype} | {desc} |")
        lines.append("")
    return "\n".join(lines)
