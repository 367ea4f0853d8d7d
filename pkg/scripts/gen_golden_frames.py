#!/usr/bin/env python3
"""Regenerate the frozen golden-frame corpus under tests/golden/.

The corpus pins the byte-level encoding of one representative message per
type; changing it is a protocol break and should be deliberate.
"""

import json
import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "src"))

from splatspace.wire import Message, encode_message  # noqa: E402

GOLDEN = [
    Message("hello", {"user": "alice", "session": "studio"}, seq=1),
    Message("welcome", {"revision": 7, "session": "studio", "user": "alice",
                        "full_state": {"objects": {}, "pins": {}, "revision": 7}}, seq=1),
    Message("op", {"op": "grab", "object_id": "obj-3"}, seq=2),
    Message("op", {"status": "ok", "revision": 8, "flags": []}, seq=2),
    Message("delta", {"revision": 8, "kind": "grab", "actor": "alice",
                      "objects": {"obj-3": {"asset_id": "a" * 64, "grabbed_by": "alice"}},
                      "pins": {}, "users": {}, "flags": []}),
    Message("job_submit", {"image": "aGVsbG8=", "points": [[1, 2], [3, 4], [5, 6]],
                           "source": "web_view"}, seq=3),
    Message("job_confirm", {"job_id": "j-1"}, seq=4),
    Message("job_reject", {"job_id": "j-2"}, seq=5),
    Message("job", {"job_id": "j-1", "stage": "done",
                    "payload": {"asset_id": "b" * 64, "timings_ms": {"fusing": 12.5}}}),
    Message("fetch_asset", {"asset_id": "b" * 64}, seq=6),
    Message("asset", {"asset_id": "b" * 64, "ply": "cGx5"}, seq=6),
    Message("resync", {"from_revision": 5}, seq=7),
    Message("resync", {"deltas": [], "menus": {"alice": None}}, seq=7),
    Message("error", {"code": "grab_denied", "message": "object obj-3 held by bob"}, seq=8),
    Message("ping", {"nonce": 41}, seq=9),
    Message("pong", {"nonce": 41}, seq=9),
    Message("vendor_extension", {"anything": [1, 2, 3]}),   # unknown type, preserved
]


def main() -> None:
    out_dir = Path(__file__).resolve().parents[1] / "tests" / "golden"
    out_dir.mkdir(parents=True, exist_ok=True)
    blob = b"".join(encode_message(m) for m in GOLDEN)
    (out_dir / "frames.bin").write_bytes(blob)
    expected = [{"type": m.type, "seq": m.seq, "body": m.body} for m in GOLDEN]
    (out_dir / "frames.json").write_text(json.dumps(expected, indent=2, sort_keys=True) + "\n")
    print(f"wrote {len(GOLDEN)} golden frames ({len(blob)} bytes)")


if __name__ == "__main__":
    main()
