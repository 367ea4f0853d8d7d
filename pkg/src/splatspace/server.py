"""Network endpoint: sessions, pipeline jobs, broadcast, and resync.

One reader and one writer thread per connection; every session mutation goes
through the session's broadcast lock so deltas leave in revision order.  A
client that falls more than ``write_queue_limit`` frames behind is dropped.
"""

from __future__ import annotations

import base64
import logging
import queue
import socket
import threading
import time
from collections import deque
from dataclasses import dataclass, field

from .assets import EmptyAsset
from .config import ServiceConfig
from .http_backend import http_backend
from .imaging import b64_to_png, png_to_b64
from .mock_backend import MockBackend
from .pipeline import (
    BackendFailure,
    GenerationPipeline,
    InvalidPrompt,
    JobView,
    SegmentationPrompt,
    UnknownJob,
    WrongStage,
)
from .render import AXIS_VIEW_DIRECTIONS, Camera, InvalidCamera, framing_camera, orbit_camera, render
from .session import (
    BadOperation,
    GrabDenied,
    NotHolder,
    SessionCore,
    SessionDelta,
    UnknownId,
    restore_state,
    snapshot_state,
)
from .store import AssetStore, UnknownAsset
from .wire import FrameDecoder, Message, ProtocolError, encode_message

log = logging.getLogger(__name__)

_ERROR_CODES = [
    (InvalidPrompt, "invalid_prompt"),
    (WrongStage, "wrong_stage"),
    (UnknownJob, "unknown_job"),
    (BackendFailure, "backend_failure"),
    (GrabDenied, "grab_denied"),
    (NotHolder, "not_holder"),
    (BadOperation, "bad_op"),
    (InvalidCamera, "invalid_camera"),
    (UnknownAsset, "unknown_asset"),
    (UnknownId, "unknown_id"),
]

_MAX_RENDER_EDGE = 1024
_LEASE_TICK_S = 0.5


class _Conn:
    """One client connection; owns its socket, outbox, and writer thread."""

    _ids = iter(range(1, 1 << 31))

    def __init__(self, stream, server: "SpaceServer"):
        self.stream = stream
        self.server = server
        self.conn_id = next(self._ids)
        self.user: str | None = None
        self.session_id: str | None = None
        self.outbox: queue.Queue = queue.Queue(maxsize=server.config.write_queue_limit)
        self.closed = threading.Event()
        self.writer = threading.Thread(target=self._write_loop, daemon=True,
                                       name=f"conn-{self.conn_id}-writer")

    def send(self, msg: Message) -> None:
        if self.closed.is_set():
            return
        try:
            self.outbox.put_nowait(encode_message(msg))
        except queue.Full:
            log.warning("conn %d overran its write queue; disconnecting", self.conn_id)
            self.close()

    def close(self) -> None:
        if self.closed.is_set():
            return
        self.closed.set()
        try:
            self.outbox.put_nowait(None)
        except queue.Full:
            pass
        # a plain close() leaves the peer hanging while our reader thread is
        # still blocked in recv(), so half-close the stream first
        shutdown = getattr(self.stream, "shutdown", None)
        if shutdown is not None:
            try:
                shutdown(socket.SHUT_RDWR)
            except OSError:
                pass
        try:
            self.stream.close()
        except OSError:
            pass

    def _write_loop(self) -> None:
        while True:
            frame = self.outbox.get()
            if frame is None or self.closed.is_set():
                break
            try:
                self.stream.sendall(frame)
            except OSError:
                break
        self.close()


@dataclass
class _Session:
    core: SessionCore
    lock: threading.Lock = field(default_factory=threading.Lock)
    ring: deque = field(default_factory=deque)
    subscribers: list[_Conn] = field(default_factory=list)
    user_conns: dict[str, int] = field(default_factory=dict)


class SpaceServer:
    def __init__(self, config: ServiceConfig | None = None, assets: AssetStore | None = None,
                 backend=None):
        self.config = (config or ServiceConfig()).validate()
        self.assets = assets or AssetStore()
        if backend is None:
            stages = {self.config.segment_backend, self.config.multiview_backend,
                      self.config.gaussian_backend}
            if stages == {"mock"}:
                backend = MockBackend(self.config.segment_threshold, self.config.splat_budget)
            else:
                backend = _SplitBackend(self.config)
        self.pipeline = GenerationPipeline(backend, self.assets, self.config,
                                           on_update=self._on_job_update)
        self._sessions: dict[str, _Session] = {}
        self._sessions_lock = threading.Lock()
        self._listeners: list[socket.socket] = []
        self._threads: list[threading.Thread] = []
        self._stop = threading.Event()
        if self.config.snapshot_path:
            self._load_snapshots()

    # -- lifecycle ------------------------------------------------------------

    def start(self, listen: str | None = None) -> tuple[str, int]:
        host, port = _split_addr(listen or self.config.listen)
        sock = socket.create_server((host, port))
        self._listeners.append(sock)
        thread = threading.Thread(target=self._accept_loop, args=(sock, None),
                                  daemon=True, name="accept")
        thread.start()
        self._threads.append(thread)
        timer = threading.Thread(target=self._lease_loop, daemon=True, name="leases")
        timer.start()
        self._threads.append(timer)
        if self.config.ws_listen:
            from .wsbridge import start_ws_listener
            self._listeners.append(start_ws_listener(self, self.config.ws_listen))
        return sock.getsockname()[:2]

    def stop(self) -> None:
        self._stop.set()
        for sock in self._listeners:
            # shutdown wakes the accept loop; close alone leaves it blocked
            try:
                sock.shutdown(socket.SHUT_RDWR)
            except OSError:
                pass
            try:
                sock.close()
            except OSError:
                pass
        with self._sessions_lock:
            sessions = list(self._sessions.values())
        for sess in sessions:
            for conn in list(sess.subscribers):
                conn.close()
        # quiesce the accept/lease threads so the snapshot content is settled
        for thread in self._threads:
            thread.join(timeout=2.0)
        if self.config.snapshot_path:
            self._save_snapshots()
        self.pipeline.close()

    def _accept_loop(self, listener: socket.socket, wrap) -> None:
        while not self._stop.is_set():
            try:
                sock, _addr = listener.accept()
            except OSError:
                return
            stream = wrap(sock) if wrap else sock
            if stream is None:
                continue
            self._spawn_conn(stream)

    def _spawn_conn(self, stream) -> None:
        conn = _Conn(stream, self)
        conn.writer.start()
        reader = threading.Thread(target=self._read_loop, args=(conn,), daemon=True,
                                  name=f"conn-{conn.conn_id}-reader")
        reader.start()

    def _lease_loop(self) -> None:
        while not self._stop.wait(_LEASE_TICK_S):
            now_ms = int(time.time() * 1000)
            with self._sessions_lock:
                sessions = list(self._sessions.values())
            for sess in sessions:
                with sess.lock:
                    for delta in sess.core.expire_leases(now_ms):
                        self._broadcast(sess, delta)

    # -- connection handling ---------------------------------------------------

    def _read_loop(self, conn: _Conn) -> None:
        decoder = FrameDecoder()
        try:
            while not conn.closed.is_set():
                data = conn.stream.recv(65536)
                if not data:
                    break
                for msg in decoder.feed(data):
                    self._handle(conn, msg)
        except ProtocolError as exc:
            conn.send(Message("error", {"code": "protocol", "message": str(exc)}))
            time.sleep(0.05)  # give the writer a chance to flush the error
        except OSError:
            pass
        finally:
            self._drop_conn(conn)

    def _handle(self, conn: _Conn, msg: Message) -> None:
        if conn.user is None and msg.type != "hello":
            raise ProtocolError(f"first message must be hello, got {msg.type!r}")
        try:
            if msg.type == "hello":
                self._on_hello(conn, msg)
            elif msg.type == "op":
                self._on_op(conn, msg)
            elif msg.type == "job_submit":
                self._on_job_submit(conn, msg)
            elif msg.type in ("job_confirm", "job_reject"):
                self._on_job_gate(conn, msg)
            elif msg.type == "fetch_asset":
                self._on_fetch_asset(conn, msg)
            elif msg.type == "resync":
                self._on_resync(conn, msg)
            elif msg.type == "ping":
                conn.send(Message("pong", {"nonce": msg.body.get("nonce")}, seq=msg.seq))
            else:
                conn.send(Message("error", {"code": "unsupported_type",
                                            "message": f"no handler for {msg.type!r}"},
                                  seq=msg.seq))
        except ProtocolError:
            raise
        except Exception as exc:
            conn.send(Message("error", {"code": _error_code(exc), "message": str(exc)},
                              seq=msg.seq))

    def _session(self, session_id: str) -> _Session:
        with self._sessions_lock:
            sess = self._sessions.get(session_id)
            if sess is None:
                core = SessionCore(session_id, self.assets,
                                   lease_ms=self.config.grab_lease_ms,
                                   orbit_frame_count=self.config.orbit_frame_count)
                sess = _Session(core=core, ring=deque(maxlen=self.config.delta_buffer))
                self._sessions[session_id] = sess
            return sess

    def _on_hello(self, conn: _Conn, msg: Message) -> None:
        if conn.user is not None:
            raise ProtocolError("duplicate hello")
        user = msg.body.get("user")
        session_id = msg.body.get("session")
        if not isinstance(user, str) or not user or not isinstance(session_id, str) or not session_id:
            raise ProtocolError("hello needs non-empty 'user' and 'session' strings")
        sess = self._session(session_id)
        with sess.lock:
            join = {"op": "join"}
            if msg.body.get("pose"):
                join["pose"] = msg.body["pose"]
            delta = sess.core.apply(join, user, _now_ms())
            conn.user = user
            conn.session_id = session_id
            sess.subscribers.append(conn)
            sess.user_conns[user] = sess.user_conns.get(user, 0) + 1
            state = self._redacted_state(sess.core, user)
            conn.send(Message("welcome", {
                "revision": state["revision"],
                "full_state": state,
                "session": session_id,
                "user": user,
            }, seq=msg.seq))
            self._broadcast(sess, delta, exclude=conn)

    def _drop_conn(self, conn: _Conn) -> None:
        conn.close()
        if conn.session_id is None or self._stop.is_set():
            # during shutdown, presence stays as-is so snapshots are settled
            return
        sess = self._session(conn.session_id)
        with sess.lock:
            if conn in sess.subscribers:
                sess.subscribers.remove(conn)
            remaining = sess.user_conns.get(conn.user, 1) - 1
            if remaining > 0:
                sess.user_conns[conn.user] = remaining
                return
            sess.user_conns.pop(conn.user, None)
            if conn.user in sess.core.users:
                delta = sess.core.apply({"op": "leave"}, conn.user, _now_ms())
                self._broadcast(sess, delta)

    # -- session ops -------------------------------------------------------------

    def _on_op(self, conn: _Conn, msg: Message) -> None:
        sess = self._session(conn.session_id)
        if msg.body.get("op") == "preview":
            png = self._render_preview(sess, msg.body)
            conn.send(Message("op", {"status": "ok", "revision": sess.core.revision,
                                     "flags": [], "preview_png": png}, seq=msg.seq))
            return
        with sess.lock:
            delta = sess.core.apply(dict(msg.body), conn.user, _now_ms())
            conn.send(Message("op", {"status": "ok", "revision": delta.revision,
                                     "flags": delta.flags}, seq=msg.seq))
            self._broadcast(sess, delta)

    def _render_preview(self, sess: _Session, body: dict) -> str:
        asset_id = body.get("asset_id")
        if not asset_id:
            oid = body.get("object_id")
            with sess.lock:
                if oid not in sess.core.objects:
                    raise UnknownId(f"object {oid!r} not in session")
                asset_id = sess.core.objects[oid]["asset_id"]
        asset = self.assets.get(asset_id)
        if body.get("camera"):
            camera = Camera.from_dict(body["camera"])
            if camera.width > _MAX_RENDER_EDGE or camera.height > _MAX_RENDER_EDGE:
                raise InvalidCamera(f"preview capped at {_MAX_RENDER_EDGE}px per edge")
        else:
            camera = orbit_camera(asset, float(body.get("azimuth", 0.0)),
                                  min(self.config.view_resolution, _MAX_RENDER_EDGE))
        return png_to_b64(render(asset, camera).pixels)

    def _broadcast(self, sess: _Session, delta: SessionDelta, exclude: _Conn | None = None) -> None:
        """Queue one delta, in revision order, to every subscriber.

        Callers hold the session lock.  Pin payload renders ride along as
        base64 PNG; pie-menu content goes only to its owner.
        """
        public = delta.public_dict()
        pin_images = self._render_pin_images(delta)
        if pin_images:
            public["pin_images"] = pin_images
        sess.ring.append(public)
        menu_images = None
        if delta.kind == "open_pie_menu" and delta.menus:
            menu_images = self._render_menu_images(next(iter(delta.menus.values())))
        for sub in list(sess.subscribers):
            if sub is exclude:
                continue
            payload = public
            if sub.user in delta.menus:
                payload = dict(public)
                payload["menus"] = {sub.user: delta.menus[sub.user]}
                if menu_images:
                    payload["menu_images"] = menu_images
            sub.send(Message("delta", payload))

    def _render_pin_images(self, delta: SessionDelta) -> dict[str, str]:
        images = {}
        for pid, pin in delta.pins.items():
            if pin is None or delta.kind not in ("snapshot", "pin_view"):
                continue
            spec = pin["image"]
            try:
                asset = self.assets.get(spec["asset_id"])
                if spec["kind"] == "snapshot":
                    camera = Camera.from_dict(spec["camera"])
                    if camera.width > _MAX_RENDER_EDGE or camera.height > _MAX_RENDER_EDGE:
                        raise InvalidCamera("snapshot resolution cap")
                elif spec["kind"] == "view":
                    camera = framing_camera(asset, AXIS_VIEW_DIRECTIONS[spec["view"]],
                                            self.config.view_resolution)
                else:  # orbit reference: first frame stands in
                    camera = orbit_camera(asset, 0.0, self.config.view_resolution)
                images[pid] = png_to_b64(render(asset, camera).pixels)
            except (UnknownAsset, EmptyAsset, InvalidCamera) as exc:
                log.warning("pin %s render skipped: %s", pid, exc)
        return images

    def _render_menu_images(self, menu: dict | None) -> dict[str, str] | None:
        if not menu:
            return None
        try:
            asset = self.assets.get(menu["asset_id"])
            images = {
                name: png_to_b64(render(asset, framing_camera(
                    asset, direction, self.config.view_resolution)).pixels)
                for name, direction in AXIS_VIEW_DIRECTIONS.items()
            }
            source = self.assets.source_image(menu["asset_id"])
            if source is not None:
                images["center"] = png_to_b64(source)
            return images
        except (UnknownAsset, EmptyAsset) as exc:
            log.warning("menu render skipped: %s", exc)
            return None

    def _redacted_state(self, core: SessionCore, user: str) -> dict:
        state = core.state_dict()
        state["menus"] = {u: m for u, m in state["menus"].items() if u == user}
        return state

    # -- resync -------------------------------------------------------------------

    def _on_resync(self, conn: _Conn, msg: Message) -> None:
        from_revision = msg.body.get("from_revision")
        if not isinstance(from_revision, int):
            raise BadOperation("resync needs integer 'from_revision'")
        sess = self._session(conn.session_id)
        with sess.lock:
            current = sess.core.revision
            own_menu = {conn.user: sess.core.menus.get(conn.user)}
            if from_revision == current:
                conn.send(Message("resync", {"deltas": [], "menus": own_menu}, seq=msg.seq))
                return
            ring = list(sess.ring)
            wanted = [d for d in ring if d["revision"] > from_revision]
            covers = (
                0 <= from_revision < current
                and wanted
                and wanted[0]["revision"] == from_revision + 1
                and wanted[-1]["revision"] == current
            )
            if covers:
                conn.send(Message("resync", {"deltas": wanted, "menus": own_menu}, seq=msg.seq))
            else:
                state = self._redacted_state(sess.core, conn.user)
                conn.send(Message("resync", {"full_state": state, "revision": current},
                                  seq=msg.seq))

    # -- pipeline ----------------------------------------------------------------

    def _on_job_submit(self, conn: _Conn, msg: Message) -> None:
        try:
            frame = b64_to_png(msg.body["image"])
            points = tuple((p[0], p[1]) for p in msg.body["points"])
        except (KeyError, TypeError, IndexError, ValueError) as exc:
            raise InvalidPrompt(f"bad prompt payload: {exc}") from None
        prompt = SegmentationPrompt(frame=frame, points=points,
                                    source=msg.body.get("source", "file"))
        job_id = self.pipeline.submit_prompt(prompt, context=(conn.user, conn.session_id))
        conn.send(Message("job", {"job_id": job_id, "stage": "segmenting", "payload": {}},
                          seq=msg.seq))

    def _on_job_gate(self, conn: _Conn, msg: Message) -> None:
        job_id = msg.body.get("job_id")
        if not isinstance(job_id, str):
            raise UnknownJob("missing job_id")
        if msg.type == "job_confirm":
            self.pipeline.confirm(job_id)
        else:
            self.pipeline.reject(job_id)
        view = self.pipeline.job(job_id)
        conn.send(Message("job", {"job_id": job_id, "stage": view.stage, "payload": {}},
                          seq=msg.seq))

    def _on_job_update(self, view: JobView) -> None:
        if not view.context:
            return
        user, session_id = view.context
        payload: dict = {"timings_ms": view.timings_ms}
        if view.stage == "awaiting_confirmation" and view.cutout is not None:
            payload["cutout_png"] = png_to_b64(view.cutout)
            payload["warning"] = view.warning
        elif view.stage == "done":
            payload["asset_id"] = view.result_asset
        elif view.stage == "failed":
            payload["error"] = view.error
        sess = self._session(session_id)
        with sess.lock:
            targets = [c for c in sess.subscribers if c.user == user]
        message = Message("job", {"job_id": view.job_id, "stage": view.stage,
                                  "payload": payload})
        for target in targets:
            target.send(message)

    def _on_fetch_asset(self, conn: _Conn, msg: Message) -> None:
        asset_id = msg.body.get("asset_id")
        if not isinstance(asset_id, str):
            raise UnknownAsset("missing asset_id")
        blob = self.assets.blob(asset_id)
        conn.send(Message("asset", {"asset_id": asset_id,
                                    "ply": base64.b64encode(blob).decode("ascii")},
                          seq=msg.seq))

    # -- persistence ----------------------------------------------------------------

    def _snapshot_file(self, session_id: str):
        from pathlib import Path
        root = Path(self.config.snapshot_path)
        root.mkdir(parents=True, exist_ok=True)
        return root / f"{session_id}.snap"

    def _save_snapshots(self) -> None:
        with self._sessions_lock:
            sessions = dict(self._sessions)
        for session_id, sess in sessions.items():
            with sess.lock:
                blob = snapshot_state(sess.core)
            self._snapshot_file(session_id).write_bytes(blob)
            log.info("session %s snapshot written (%d bytes)", session_id, len(blob))

    def _load_snapshots(self) -> None:
        from pathlib import Path
        root = Path(self.config.snapshot_path)
        if not root.is_dir():
            return
        for path in sorted(root.glob("*.snap")):
            core = restore_state(path.read_bytes(), self.assets,
                                 lease_ms=self.config.grab_lease_ms,
                                 orbit_frame_count=self.config.orbit_frame_count)
            self._sessions[core.session_id] = _Session(
                core=core, ring=deque(maxlen=self.config.delta_buffer))
            log.info("session %s restored at revision %d", core.session_id, core.revision)


class _SplitBackend:
    """Routes each stage to the mock or the HTTP adapter per config."""

    def __init__(self, config: ServiceConfig):
        self._mock = MockBackend(config.segment_threshold, config.splat_budget)
        self._http = http_backend(config.http_base_url, timeout=config.stage_timeout_s)
        self._route = {
            "segment": config.segment_backend,
            "multiview": config.multiview_backend,
            "gaussian": config.gaussian_backend,
        }

    def _pick(self, stage: str):
        return self._http if self._route[stage] == "http" else self._mock

    def segment(self, frame, points):
        return self._pick("segment").segment(frame, points)

    def multiview(self, cutout):
        return self._pick("multiview").multiview(cutout)

    def gaussian(self, cutout, views):
        return self._pick("gaussian").gaussian(cutout, views)


def _error_code(exc: Exception) -> str:
    for klass, code in _ERROR_CODES:
        if isinstance(exc, klass):
            return code
    return "internal"


def _split_addr(addr: str) -> tuple[str, int]:
    host, _, port = addr.rpartition(":")
    if not host or not port.isdigit():
        raise ValueError(f"listen address must be host:port, got {addr!r}")
    return host, int(port)


def _now_ms() -> int:
    return int(time.time() * 1000)
