"""
A shared session, end to end over the wire
===========================================

Starts the endpoint in-process, connects two clients, and runs the whole
collaborative loop: prompt to object, grab contention, whiteboard pins, a
lease-protected move, and a state hash both replicas agree on.
"""

import numpy as np

from splatspace.client import WireClient
from splatspace.config import ServiceConfig
from splatspace.imaging import png_to_b64
from splatspace.server import SpaceServer
from splatspace.session import SessionCore

server = SpaceServer(config=ServiceConfig(view_resolution=64))
host, port = server.start("127.0.0.1:0")
address = f"{host}:{port}"
print(f"endpoint on {address}")

alice = WireClient.connect(address)
bob = WireClient.connect(address)
alice.hello("alice", "demo")
bob.hello("bob", "demo")

# Alice turns an image region into a shared object.
frame = np.zeros((40, 40, 4), dtype=np.uint8)
frame[:, :, :3] = (240, 240, 240)
frame[:, :, 3] = 255
frame[10:30, 10:30, :3] = (40, 130, 200)
submitted = alice.request("job_submit", {
    "image": png_to_b64(frame),
    "points": [[14, 14], [20, 20], [26, 26]],
    "source": "web_view",
})
job_id = submitted.body["job_id"]
gate = alice.wait_for(lambda m: m.type == "job" and m.body["stage"] == "awaiting_confirmation")
print(f"job {job_id[:8]}.. segmented; cutout attached: {'cutout_png' in gate.body['payload']}")

alice.request("job_confirm", {"job_id": job_id})
done = alice.wait_for(lambda m: m.type == "job" and m.body["stage"] == "done", timeout=30)
asset_id = done.body["payload"]["asset_id"]
print(f"asset {asset_id[:12]}.. created in "
      f"{sum(done.body['payload']['timings_ms'].values()):.0f} ms of stage time")

alice.request("op", {"op": "create_object", "asset_id": asset_id})
delta = bob.wait_for(lambda m: m.type == "delta" and m.body["kind"] == "create_object")
oid = next(iter(delta.body["objects"]))
print(f"shared object {oid}, proxy radius "
      f"{delta.body['objects'][oid]['proxy_radius']:.2f} m")

# Grab contention: the single-holder rule in action.
alice.request("op", {"op": "grab", "object_id": oid})
denied = bob.request("op", {"op": "grab", "object_id": oid})
print(f"bob's grab while alice holds: {denied.body['code']}")

alice.request("op", {"op": "move", "object_id": oid,
                     "transform": {"position": [0.4, 1.1, 0.6],
                                   "rotation": [1, 0, 0, 0], "uniform_scale": 2.0}})
alice.request("op", {"op": "release", "object_id": oid})

# 3D back to 2D: a snapshot pin and a front-view pin on the whiteboard.
alice.request("op", {"op": "snapshot", "object_id": oid,
                     "camera": {"position": [0.4, 1.4, -1.4], "look_at": [0.4, 1.1, 0.6],
                                "fov": 0.9, "width": 96, "height": 96},
                     "uv": [0.3, 0.4]})
bob_delta = bob.wait_for(lambda m: m.type == "delta" and m.body["kind"] == "snapshot")
pid = next(iter(bob_delta.body["pins"]))
print(f"pin {pid} broadcast with image payload: {pid in bob_delta.body.get('pin_images', {})}")
bob.request("op", {"op": "move_pin", "pin_id": pid, "uv": [0.8, 0.2]})
bob.request("op", {"op": "scale_pin", "pin_id": pid, "factor": 1.6})

# Both replicas agree: replaying the op log reproduces the state hash.
sess = server._session("demo")
with sess.lock:
    log = list(sess.core.log)
    live_hash = sess.core.state_hash()
replica = SessionCore.replay("demo", server.assets, log)
print(f"state hash {live_hash[:16]}.. replay match: {replica.state_hash() == live_hash}")

alice.close()
bob.close()
server.stop()
print("done")
