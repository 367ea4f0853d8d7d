#!/usr/bin/env python3
"""Record a real session (welcome + delta log + final state) for the web
client's replay test, into frontend/tests/fixtures/replay.json."""

import json
import sys
import time
from pathlib import Path

ROOT = Path(__file__).resolve().parents[1]
sys.path.insert(0, str(ROOT / "src"))
sys.path.insert(0, str(ROOT / "tests"))

import numpy as np  # noqa: E402

from conftest import make_asset  # noqa: E402
from splatspace.client import WireClient  # noqa: E402
from splatspace.config import ServiceConfig  # noqa: E402
from splatspace.server import SpaceServer  # noqa: E402
from splatspace.session import Transform  # noqa: E402
from splatspace.store import AssetStore  # noqa: E402


def main() -> None:
    rng = np.random.default_rng(42)
    assets = AssetStore()
    asset_ids = [assets.register(make_asset(rng, 5)) for _ in range(2)]
    server = SpaceServer(config=ServiceConfig(view_resolution=16), assets=assets)
    host, port = server.start("127.0.0.1:0")
    address = f"{host}:{port}"

    observer = WireClient.connect(address)
    welcome = observer.hello("webby", "studio")

    painter = WireClient.connect(address)
    painter.hello("painter", "studio")
    cam = {"position": [0, 0, -2], "look_at": [0, 0, 0], "fov": 0.9,
           "width": 8, "height": 8}
    replies = [
        painter.request("op", {"op": "create_object", "asset_id": asset_ids[0]}),
        painter.request("op", {"op": "create_object", "asset_id": asset_ids[1]}),
        painter.request("op", {"op": "grab", "object_id": "obj-1"}),
        painter.request("op", {"op": "move", "object_id": "obj-1",
                               "transform": Transform((1.0, 0.5, 0.0)).to_dict()}),
        painter.request("op", {"op": "snapshot", "object_id": "obj-1", "camera": cam,
                               "uv": [0.2, 0.3]}),
        painter.request("op", {"op": "pin_view", "object_id": "obj-2", "view": "front",
                               "uv": [0.7, 0.7]}),
        painter.request("op", {"op": "move_pin", "pin_id": "pin-1", "uv": [0.9, 0.1]}),
        painter.request("op", {"op": "scale_pin", "pin_id": "pin-2", "factor": 1.5}),
        painter.request("op", {"op": "release", "object_id": "obj-1"}),
        painter.request("op", {"op": "delete_object", "object_id": "obj-2"}),
    ]
    assert all(r.body.get("status") == "ok" for r in replies)
    final_revision = replies[-1].body["revision"]

    deadline = time.monotonic() + 5
    deltas = []
    while time.monotonic() < deadline:
        deltas.extend(m.body for m in observer.drain() if m.type == "delta")
        if deltas and deltas[-1]["revision"] == final_revision:
            break
        time.sleep(0.02)
    assert deltas[-1]["revision"] == final_revision

    final = observer.request("resync", {"from_revision": -1})
    fixture = {
        "user": "webby",
        "welcome_state": welcome.body["full_state"],
        "deltas": deltas,
        "final_state": final.body["full_state"],
    }
    out = ROOT / "frontend" / "tests" / "fixtures" / "replay.json"
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(json.dumps(fixture, indent=1, sort_keys=True) + "\n")
    print(f"wrote {out} ({len(deltas)} deltas, final revision {final_revision})")

    observer.close()
    painter.close()
    server.stop()


if __name__ == "__main__":
    main()
