"""Server-authoritative shared-space state machine.

One logical writer per session: every mutation flows through ``apply`` under
the session lock, bumps the revision by exactly one, and yields a delta that
names the changed entities.  Pie-menu changes ride in the delta's private
part and are never broadcast.  State is a pure fold of the op log (ids are
sequential, asset ids are content hashes, lease bookkeeping uses the log's
timestamps), so replicas replaying the same log agree on the state hash.
"""

from __future__ import annotations

import hashlib
import json
import math
import struct
import threading
from dataclasses import dataclass, field

from .render import Camera
from .store import AssetStore

SNAPSHOT_MAGIC = b"T2RSNAP1"
SCALE_MIN, SCALE_MAX = 0.01, 100.0
NORMALIZED_DIAGONAL = 0.5   # bounds diagonal, meters, at uniform_scale 1
DEFAULT_LEASE_MS = 10_000

PIN_VIEWS = ("front", "left", "right", "back", "orbit")

OP_KINDS = (
    "join", "leave",
    "create_object", "grab", "move", "scale", "release", "delete_object",
    "snapshot", "pin_view", "move_pin", "scale_pin", "delete_pin",
    "open_pie_menu", "toggle_pie_menu",
)


class UnknownId(KeyError):
    """Referenced user/object/pin/asset does not exist."""


class GrabDenied(RuntimeError):
    """Object is held by another user with a live lease."""


class NotHolder(RuntimeError):
    """Move/Scale attempted without holding the grab."""


class BadOperation(ValueError):
    """Malformed op payload (unknown kind or missing field)."""


class CorruptSnapshot(ValueError):
    """Snapshot blob failed magic, structure, or content-hash checks."""


def _clamp(value, lo: float, hi: float) -> tuple[float, bool]:
    if not isinstance(value, (int, float)) or not math.isfinite(value):
        raise BadOperation(f"expected a finite number, got {value!r}")
    v = min(max(float(value), lo), hi)
    return v, v != float(value)


@dataclass(frozen=True)
class Transform:
    position: tuple[float, float, float] = (0.0, 0.0, 0.0)
    rotation: tuple[float, float, float, float] = (1.0, 0.0, 0.0, 0.0)
    uniform_scale: float = 1.0

    def __post_init__(self):
        try:
            object.__setattr__(self, "position", tuple(float(v) for v in self.position))
            object.__setattr__(self, "rotation", tuple(float(v) for v in self.rotation))
            object.__setattr__(self, "uniform_scale", float(self.uniform_scale))
        except (TypeError, ValueError) as exc:
            raise BadOperation(f"non-numeric transform field: {exc}") from None
        if len(self.position) != 3 or len(self.rotation) != 4:
            raise BadOperation("transform needs a 3-vector position and wxyz rotation")
        values = (*self.position, *self.rotation, self.uniform_scale)
        if not all(math.isfinite(v) for v in values):
            raise BadOperation("transform fields must be finite")

    def clamped(self) -> tuple["Transform", bool]:
        scale, hit = _clamp(self.uniform_scale, SCALE_MIN, SCALE_MAX)
        if not hit:
            return self, False
        return Transform(self.position, self.rotation, scale), True

    def forward(self) -> tuple[float, float, float]:
        """Avatar forward: the rotation applied to (0, 0, 1)."""
        w, x, y, z = self.rotation
        n = math.sqrt(w * w + x * x + y * y + z * z) or 1.0
        w, x, y, z = w / n, x / n, y / n, z / n
        return (
            2.0 * (x * z + w * y),
            2.0 * (y * z - w * x),
            1.0 - 2.0 * (x * x + y * y),
        )

    def to_dict(self) -> dict:
        return {"position": list(self.position), "rotation": list(self.rotation),
                "uniform_scale": self.uniform_scale}

    @classmethod
    def from_dict(cls, d: dict) -> "Transform":
        try:
            return cls(tuple(d["position"]), tuple(d["rotation"]), d["uniform_scale"])
        except (KeyError, TypeError) as exc:
            raise BadOperation(f"bad transform: {exc}") from None


@dataclass
class SessionDelta:
    """Exactly what one applied op changed; ``None`` entity values mean deleted."""

    revision: int
    kind: str
    actor: str
    objects: dict[str, dict | None] = field(default_factory=dict)
    pins: dict[str, dict | None] = field(default_factory=dict)
    users: dict[str, dict | None] = field(default_factory=dict)
    menus: dict[str, dict | None] = field(default_factory=dict)
    flags: list[str] = field(default_factory=list)

    def public_dict(self) -> dict:
        """Broadcast payload; never carries pie-menu content."""
        return {
            "revision": self.revision,
            "kind": self.kind,
            "actor": self.actor,
            "objects": self.objects,
            "pins": self.pins,
            "users": self.users,
            "flags": self.flags,
        }


class SessionCore:
    """State plus op log for one shared session."""

    def __init__(self, session_id: str, assets: AssetStore,
                 lease_ms: int = DEFAULT_LEASE_MS, orbit_frame_count: int = 36):
        self.session_id = session_id
        self.assets = assets
        self.lease_ms = int(lease_ms)
        self.orbit_frame_count = int(orbit_frame_count)
        self.lock = threading.RLock()
        self.revision = 0
        self.users: dict[str, dict] = {}
        self.objects: dict[str, dict] = {}
        self.pins: dict[str, dict] = {}
        self.menus: dict[str, dict] = {}
        self.log: list[tuple[dict, str, int]] = []
        self._object_seq = 0
        self._pin_seq = 0

    # -- op application -----------------------------------------------------

    def apply(self, op: dict, actor: str, t_ms: int = 0) -> SessionDelta:
        if not isinstance(op, dict) or "op" not in op:
            raise BadOperation("op payload must be an object with an 'op' kind")
        kind = op["op"]
        if kind not in OP_KINDS:
            raise BadOperation(f"unknown op kind {kind!r}")
        with self.lock:
            if kind != "join" and actor not in self.users:
                raise UnknownId(f"user {actor!r} not in session")
            delta = SessionDelta(revision=self.revision + 1, kind=kind, actor=actor)
            getattr(self, f"_op_{kind}")(op, actor, int(t_ms), delta)
            self.revision += 1
            self.log.append((dict(op), actor, int(t_ms)))
            return delta

    def expire_leases(self, t_ms: int) -> list[SessionDelta]:
        """Apply synthetic releases for grabs idle past the lease window."""
        deltas = []
        with self.lock:
            expired = [
                (oid, obj["grabbed_by"]) for oid, obj in self.objects.items()
                if obj["grabbed_by"] is not None and obj["grab_deadline_ms"] is not None
                and t_ms >= obj["grab_deadline_ms"]
            ]
            for oid, holder in expired:
                delta = self.apply({"op": "release", "object_id": oid}, holder, t_ms)
                delta.flags.append("auto_release")
                deltas.append(delta)
        return deltas

    # -- handlers -------------------------------------------------------------

    def _op_join(self, op, actor, t_ms, delta):
        pose = Transform.from_dict(op["pose"]) if op.get("pose") else Transform()
        self.users[actor] = {"pose": pose.to_dict()}
        delta.users[actor] = dict(self.users[actor])

    def _op_leave(self, op, actor, t_ms, delta):
        for oid, obj in self.objects.items():
            if obj["grabbed_by"] == actor:
                obj["grabbed_by"] = None
                obj["grab_deadline_ms"] = None
                delta.objects[oid] = dict(obj)
        if actor in self.menus:
            del self.menus[actor]
            delta.menus[actor] = None
        del self.users[actor]
        delta.users[actor] = None

    def _op_create_object(self, op, actor, t_ms, delta):
        asset_id = op.get("asset_id")
        if not asset_id or asset_id not in self.assets:
            raise UnknownId(f"asset {asset_id!r} not registered")
        if op.get("transform"):
            transform, clamped = Transform.from_dict(op["transform"]).clamped()
        else:
            pose = Transform.from_dict(op["actor_pose"]) if op.get("actor_pose") \
                else Transform.from_dict(self.users[actor]["pose"])
            fx, fy, fz = pose.forward()
            px, py, pz = pose.position
            transform, clamped = Transform((px + fx, py + fy, pz + fz)), False
        if clamped:
            delta.flags.append("clamp_applied")
        diag = self.assets.diagonal(asset_id)
        base_scale = NORMALIZED_DIAGONAL / diag if diag > 0 else 1.0
        self._object_seq += 1
        oid = f"obj-{self._object_seq}"
        self.objects[oid] = {
            "asset_id": asset_id,
            "transform": transform.to_dict(),
            "proxy_radius": self._proxy_radius(diag, base_scale, transform.uniform_scale),
            "grabbed_by": None,
            "grab_deadline_ms": None,
            "created_by": actor,
            "base_scale": base_scale,
        }
        delta.objects[oid] = dict(self.objects[oid])

    @staticmethod
    def _proxy_radius(diag: float, base_scale: float, uniform_scale: float) -> float:
        return 0.5 * diag * base_scale * uniform_scale

    def _object(self, op) -> tuple[str, dict]:
        oid = op.get("object_id")
        if oid not in self.objects:
            raise UnknownId(f"object {oid!r} not in session")
        return oid, self.objects[oid]

    def _op_grab(self, op, actor, t_ms, delta):
        oid, obj = self._object(op)
        holder = obj["grabbed_by"]
        if holder is not None and holder != actor and t_ms < (obj["grab_deadline_ms"] or 0):
            raise GrabDenied(f"object {oid} held by {holder}")
        obj["grabbed_by"] = actor
        obj["grab_deadline_ms"] = t_ms + self.lease_ms
        delta.objects[oid] = dict(obj)

    def _require_holder(self, obj, oid, actor):
        if obj["grabbed_by"] != actor:
            raise NotHolder(f"object {oid} not held by {actor}")

    def _op_move(self, op, actor, t_ms, delta):
        oid, obj = self._object(op)
        self._require_holder(obj, oid, actor)
        transform, clamped = Transform.from_dict(op.get("transform") or {}).clamped()
        if clamped:
            delta.flags.append("clamp_applied")
        obj["transform"] = transform.to_dict()
        diag = self.assets.diagonal(obj["asset_id"])
        obj["proxy_radius"] = self._proxy_radius(diag, obj["base_scale"], transform.uniform_scale)
        obj["grab_deadline_ms"] = t_ms + self.lease_ms
        delta.objects[oid] = dict(obj)

    def _op_scale(self, op, actor, t_ms, delta):
        oid, obj = self._object(op)
        self._require_holder(obj, oid, actor)
        if "factor" not in op:
            raise BadOperation("scale needs a 'factor'")
        scale, clamped = _clamp(op["factor"], SCALE_MIN, SCALE_MAX)
        if clamped:
            delta.flags.append("clamp_applied")
        t = Transform.from_dict(obj["transform"])
        obj["transform"] = Transform(t.position, t.rotation, scale).to_dict()
        diag = self.assets.diagonal(obj["asset_id"])
        obj["proxy_radius"] = self._proxy_radius(diag, obj["base_scale"], scale)
        obj["grab_deadline_ms"] = t_ms + self.lease_ms
        delta.objects[oid] = dict(obj)

    def _op_release(self, op, actor, t_ms, delta):
        oid, obj = self._object(op)
        if obj["grabbed_by"] == actor:
            obj["grabbed_by"] = None
            obj["grab_deadline_ms"] = None
            delta.objects[oid] = dict(obj)

    def _op_delete_object(self, op, actor, t_ms, delta):
        oid, _ = self._object(op)
        del self.objects[oid]
        delta.objects[oid] = None   # pins derived from it stay

    def _clamped_uv(self, op, delta, default=(0.5, 0.5)):
        uv = op.get("uv", list(default))
        try:
            u, v = float(uv[0]), float(uv[1])
        except (TypeError, ValueError, IndexError):
            raise BadOperation(f"bad uv {uv!r}") from None
        cu, hit_u = _clamp(u, 0.0, 1.0)
        cv, hit_v = _clamp(v, 0.0, 1.0)
        if hit_u or hit_v:
            delta.flags.append("clamp_applied")
        return [cu, cv]

    def _new_pin(self, actor, image: dict, uv, delta):
        self._pin_seq += 1
        pid = f"pin-{self._pin_seq}"
        self.pins[pid] = {"image": image, "uv": uv, "scale": 1.0, "pinned_by": actor}
        delta.pins[pid] = dict(self.pins[pid])

    def _op_snapshot(self, op, actor, t_ms, delta):
        oid, obj = self._object(op)
        camera = Camera.from_dict(op.get("camera") or {})
        camera.validate()
        image = {"kind": "snapshot", "asset_id": obj["asset_id"], "camera": camera.to_dict()}
        self._new_pin(actor, image, self._clamped_uv(op, delta), delta)

    def _op_pin_view(self, op, actor, t_ms, delta):
        oid, obj = self._object(op)
        view = op.get("view")
        if view not in PIN_VIEWS:
            raise BadOperation(f"view must be one of {PIN_VIEWS}, got {view!r}")
        if view == "orbit":
            image = {"kind": "orbit", "asset_id": obj["asset_id"],
                     "frame_count": self.orbit_frame_count}
        else:
            image = {"kind": "view", "asset_id": obj["asset_id"], "view": view}
        self._new_pin(actor, image, self._clamped_uv(op, delta), delta)

    def _pin(self, op) -> tuple[str, dict]:
        pid = op.get("pin_id")
        if pid not in self.pins:
            raise UnknownId(f"pin {pid!r} not in session")
        return pid, self.pins[pid]

    def _op_move_pin(self, op, actor, t_ms, delta):
        pid, pin = self._pin(op)
        pin["uv"] = self._clamped_uv(op, delta, default=pin["uv"])
        delta.pins[pid] = dict(pin)

    def _op_scale_pin(self, op, actor, t_ms, delta):
        pid, pin = self._pin(op)
        if "factor" not in op:
            raise BadOperation("scale_pin needs a 'factor'")
        scale, clamped = _clamp(op["factor"], SCALE_MIN, SCALE_MAX)
        if clamped:
            delta.flags.append("clamp_applied")
        pin["scale"] = scale
        delta.pins[pid] = dict(pin)

    def _op_delete_pin(self, op, actor, t_ms, delta):
        pid, _ = self._pin(op)
        del self.pins[pid]
        delta.pins[pid] = None

    def _op_open_pie_menu(self, op, actor, t_ms, delta):
        oid, obj = self._object(op)
        self.menus[actor] = {"object_id": oid, "asset_id": obj["asset_id"], "visible": True}
        delta.menus[actor] = dict(self.menus[actor])

    def _op_toggle_pie_menu(self, op, actor, t_ms, delta):
        if actor not in self.menus:
            raise UnknownId(f"user {actor} has no pie menu open")
        menu = self.menus[actor]
        menu["visible"] = not menu["visible"]
        delta.menus[actor] = dict(menu)

    # -- state access ---------------------------------------------------------

    def state_dict(self) -> dict:
        with self.lock:
            return {
                "session_id": self.session_id,
                "revision": self.revision,
                "users": {u: dict(info) for u, info in self.users.items()},
                "objects": {oid: dict(o) for oid, o in self.objects.items()},
                "pins": {pid: dict(p) for pid, p in self.pins.items()},
                "menus": {u: dict(m) for u, m in self.menus.items()},
                "counters": {"object": self._object_seq, "pin": self._pin_seq},
            }

    def state_hash(self) -> str:
        return hashlib.sha256(canonical_json(self.state_dict()).encode()).hexdigest()

    def referenced_assets(self) -> set[str]:
        with self.lock:
            ids = {o["asset_id"] for o in self.objects.values()}
            ids |= {p["image"]["asset_id"] for p in self.pins.values()}
            ids |= {m["asset_id"] for m in self.menus.values()}
            return ids

    @classmethod
    def replay(cls, session_id: str, assets: AssetStore,
               log: list[tuple[dict, str, int]],
               lease_ms: int = DEFAULT_LEASE_MS, orbit_frame_count: int = 36) -> "SessionCore":
        core = cls(session_id, assets, lease_ms=lease_ms, orbit_frame_count=orbit_frame_count)
        for op, actor, t_ms in log:
            core.apply(op, actor, t_ms)
        return core


def canonical_json(value) -> str:
    # allow_nan=False: non-finite floats must never reach shared state, and
    # strict JSON keeps the hash portable across implementations.
    return json.dumps(value, sort_keys=True, separators=(",", ":"), allow_nan=False)


# -- persistence --------------------------------------------------------------


def snapshot_state(core: SessionCore) -> bytes:
    """Versioned binary container: magic, state JSON, content-addressed assets."""
    with core.lock:
        state = canonical_json(core.state_dict()).encode()
        parts = [SNAPSHOT_MAGIC, struct.pack(">I", len(state)), state]
        asset_ids = sorted(core.referenced_assets())
        parts.append(struct.pack(">I", len(asset_ids)))
        for asset_id in asset_ids:
            blob = core.assets.blob(asset_id)
            encoded = asset_id.encode()
            parts.append(struct.pack(">I", len(encoded)))
            parts.append(encoded)
            parts.append(struct.pack(">I", len(blob)))
            parts.append(blob)
        return b"".join(parts)


def restore_state(blob: bytes, assets: AssetStore | None = None,
                  lease_ms: int = DEFAULT_LEASE_MS, orbit_frame_count: int = 36) -> SessionCore:
    from .assets import parse_ply  # local import to avoid cycle at module load

    if assets is None:
        assets = AssetStore()
    view = memoryview(blob)
    if bytes(view[:8]) != SNAPSHOT_MAGIC:
        raise CorruptSnapshot("bad magic")

    def take(n: int) -> memoryview:
        nonlocal view
        if len(view) < n:
            raise CorruptSnapshot("truncated snapshot")
        chunk, view = view[:n], view[n:]
        return chunk

    take(8)
    (state_len,) = struct.unpack(">I", take(4))
    try:
        state = json.loads(bytes(take(state_len)).decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CorruptSnapshot(f"bad state payload: {exc}") from None
    (asset_count,) = struct.unpack(">I", take(4))
    for _ in range(asset_count):
        (id_len,) = struct.unpack(">I", take(4))
        asset_id = bytes(take(id_len)).decode("utf-8")
        (blob_len,) = struct.unpack(">I", take(4))
        payload = bytes(take(blob_len))
        if hashlib.sha256(payload).hexdigest() != asset_id:
            raise CorruptSnapshot(f"asset {asset_id} content hash mismatch")
        try:
            assets.register(parse_ply(payload))
        except ValueError as exc:
            raise CorruptSnapshot(f"asset {asset_id} unparseable: {exc}") from None

    try:
        core = SessionCore(state["session_id"], assets, lease_ms=lease_ms,
                           orbit_frame_count=orbit_frame_count)
        core.revision = int(state["revision"])
        core.users = {u: dict(info) for u, info in state["users"].items()}
        core.objects = {oid: dict(o) for oid, o in state["objects"].items()}
        core.pins = {pid: dict(p) for pid, p in state["pins"].items()}
        core.menus = {u: dict(m) for u, m in state["menus"].items()}
        core._object_seq = int(state["counters"]["object"])
        core._pin_seq = int(state["counters"]["pin"])
    except (KeyError, TypeError, AttributeError) as exc:
        raise CorruptSnapshot(f"state missing fields: {exc}") from None
    return core
