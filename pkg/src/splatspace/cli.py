"""Operator tooling: run the endpoint, render offline, drive scripted clients.

Exit codes are stable: 0 success, 1 asset/render failure, 2 usage or config
problems, 3 connection refused.
"""

from __future__ import annotations

import argparse
import json
import math
import signal
import sys
import threading
import time
from pathlib import Path

from .assets import PlyError, parse_ply
from .client import ClientClosed, WireClient
from .config import ConfigError, load_config
from .imaging import png_encode
from .render import Camera, InvalidCamera, orbit_frames, orthogonal_views, render
from .wire import Message

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_USAGE = 2
EXIT_CONNECT = 3


def _fail(code: int, message: str) -> int:
    print(message, file=sys.stderr)
    return code


def _load_asset(path: str):
    data = Path(path).read_bytes()
    return parse_ply(data)


def _parse_cam(spec: str, near_scale: float = 1e-3) -> Camera:
    """'px,py,pz;lx,ly,lz;fov_deg;WxH' -> Camera."""
    try:
        pos_s, look_s, fov_s, size_s = spec.split(";")
        position = tuple(float(v) for v in pos_s.split(","))
        look_at = tuple(float(v) for v in look_s.split(","))
        fov = math.radians(float(fov_s))
        width, height = (int(v) for v in size_s.lower().split("x"))
    except ValueError as exc:
        raise InvalidCamera(f"bad --cam spec {spec!r}: {exc}") from None
    dist = math.dist(position, look_at)
    camera = Camera(position=position, look_at=look_at, vertical_fov=fov,
                    width=width, height=height, near=max(near_scale * dist, 1e-6))
    camera.validate()
    return camera


def _parse_bg(spec: str) -> tuple[float, float, float]:
    value = spec.removeprefix("#")
    if len(value) != 6:
        raise ValueError(f"--bg wants RRGGBB hex, got {spec!r}")
    return tuple(int(value[i:i + 2], 16) / 255.0 for i in (0, 2, 4))


# ---------------------------------------------------------------------------
# subcommands


def cmd_serve(args) -> int:
    config_path = Path(args.config)
    if not config_path.is_file():
        return _fail(EXIT_USAGE, f"config file not found: {config_path}")
    try:
        config = load_config(config_path)
    except ConfigError as exc:
        return _fail(EXIT_USAGE, f"bad config: {exc}")

    from .server import SpaceServer
    server = SpaceServer(config=config)
    host, port = server.start(args.listen)
    print(f"listening on {host}:{port}", flush=True)

    done = threading.Event()

    def _shutdown(signum, _frame):
        print(f"signal {signum}: writing snapshots and shutting down", flush=True)
        done.set()

    signal.signal(signal.SIGTERM, _shutdown)
    signal.signal(signal.SIGINT, _shutdown)
    done.wait()
    server.stop()
    return EXIT_OK


def cmd_render(args) -> int:
    try:
        asset = _load_asset(args.ply)
        camera = _parse_cam(args.cam)
        background = _parse_bg(args.bg)
    except (OSError, PlyError, InvalidCamera, ValueError) as exc:
        return _fail(EXIT_FAILURE, f"{type(exc).__name__}: {exc}")
    image = render(asset, camera, background)
    Path(args.out).write_bytes(png_encode(image.pixels))
    if args.meta:
        Path(args.meta).write_text(json.dumps(camera.to_dict(), indent=2) + "\n")
    print(f"wrote {args.out} ({camera.width}x{camera.height}, "
          f"{asset.splat_count} splat{'s' if asset.splat_count != 1 else ''})")
    return EXIT_OK


def cmd_views(args) -> int:
    try:
        asset = _load_asset(args.ply)
    except (OSError, PlyError) as exc:
        return _fail(EXIT_FAILURE, f"{type(exc).__name__}: {exc}")
    if asset.splat_count == 0:
        return _fail(EXIT_FAILURE, "EmptyAsset: cannot build views of zero splats")
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    background = _parse_bg(args.bg)

    import numpy as np
    placeholder = np.zeros((2, 2, 4), dtype=np.uint8)
    views = orthogonal_views(asset, placeholder, resolution=args.size, background=background)
    for name, view in views.views().items():
        (out_dir / f"{name}.png").write_bytes(png_encode(view.pixels))
    for i, frame in enumerate(orbit_frames(asset, args.frames, args.size, background)):
        (out_dir / f"frame_{i:03d}.png").write_bytes(png_encode(frame.pixels))
    print(f"wrote 4 views + {args.frames} orbit frames to {out_dir}")
    return EXIT_OK


# -- scripted client ----------------------------------------------------------

_TOKENS = ("$job_id", "$asset_id", "$object_id", "$pin_id")


def _parse_script(text: str) -> list[tuple[int, str, dict]]:
    steps = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        try:
            at_s, msg_type, body_s = line.split(maxsplit=2)
            steps.append((int(at_s), msg_type, json.loads(body_s)))
        except (ValueError, json.JSONDecodeError) as exc:
            raise ValueError(f"script line {lineno}: {exc}") from None
    if [s[0] for s in steps] != sorted(s[0] for s in steps):
        raise ValueError("script steps must be sorted by at_ms")
    return steps


def _substitute(value, refs: dict):
    if isinstance(value, str) and value in _TOKENS:
        token = value[1:]
        if refs.get(token) is None:
            raise ValueError(f"no {token} observed yet for substitution")
        return refs[token]
    if isinstance(value, list):
        return [_substitute(v, refs) for v in value]
    if isinstance(value, dict):
        return {k: _substitute(v, refs) for k, v in value.items()}
    return value


def _seed_refs(full_state: dict, refs: dict) -> None:
    """Prime id substitution from the handshake state (newest id wins)."""
    for kind, key in (("objects", "object_id"), ("pins", "pin_id")):
        ids = sorted(full_state.get(kind) or {}, key=lambda s: (len(s), s))
        if ids:
            refs[key] = ids[-1]


def _track_refs(msg: Message, refs: dict) -> None:
    if msg.type == "job":
        refs["job_id"] = msg.body.get("job_id", refs.get("job_id"))
        payload = msg.body.get("payload") or {}
        if payload.get("asset_id"):
            refs["asset_id"] = payload["asset_id"]
    elif msg.type == "delta":
        for oid, obj in (msg.body.get("objects") or {}).items():
            if obj is not None:
                refs["object_id"] = oid
        for pid, pin in (msg.body.get("pins") or {}).items():
            if pin is not None:
                refs["pin_id"] = pid


def _print_transcript(client: WireClient) -> None:
    for entry in client.transcript:
        body = dict(entry.message.body)
        for key in ("image", "ply", "preview_png"):   # keep transcripts diff-able
            if key in body:
                body[key] = f"<{len(str(body[key]))} b64 chars>"
        print(f"{entry.at_ms:6d} {entry.direction.upper():4s} {entry.message.type} "
              f"{json.dumps(body, sort_keys=True)}")


def cmd_script(args) -> int:
    try:
        steps = _parse_script(Path(args.file).read_text())
    except (OSError, ValueError) as exc:
        return _fail(EXIT_USAGE, f"bad script: {exc}")
    try:
        client = WireClient.connect(args.connect)
    except (ConnectionRefusedError, OSError) as exc:
        return _fail(EXIT_CONNECT, f"connect to {args.connect} failed: {exc}")

    refs: dict[str, str] = {}
    status = EXIT_OK
    try:
        welcome = client.hello(args.user, args.session)
        _seed_refs(welcome.body.get("full_state") or {}, refs)
        start = time.monotonic()
        for at_ms, msg_type, body in steps:
            delay = at_ms / 1000.0 - (time.monotonic() - start)
            if delay > 0:
                time.sleep(delay)
            for msg in client.drain():
                _track_refs(msg, refs)
            body = _substitute(body, refs)
            reply = client.request(msg_type, body, timeout=args.timeout)
            _track_refs(reply, refs)
            if args.wait_jobs and msg_type in ("job_submit", "job_confirm"):
                target = ("awaiting_confirmation" if msg_type == "job_submit" else "done")
                pushed = client.wait_for(
                    lambda m: m.type == "job" and m.body.get("stage") in (target, "failed"),
                    timeout=args.timeout)
                _track_refs(pushed, refs)
        time.sleep(args.settle / 1000.0)
        for msg in client.drain():
            _track_refs(msg, refs)
    except (ClientClosed, TimeoutError, ValueError) as exc:
        print(f"script aborted: {exc}", file=sys.stderr)
        status = EXIT_FAILURE
    finally:
        _print_transcript(client)
        client.close()
    return status


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="splatspace",
                                     description="Shared splat-object space tooling")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("serve", help="run the endpoint until SIGTERM/SIGINT")
    p.add_argument("--config", required=True, help="keyed text config file")
    p.add_argument("--listen", default=None, help="host:port override")
    p.set_defaults(func=cmd_serve)

    p = sub.add_parser("render", help="render one .ply to a PNG")
    p.add_argument("--ply", required=True)
    p.add_argument("--cam", required=True, help='"px,py,pz;lx,ly,lz;fov_deg;WxH"')
    p.add_argument("--out", required=True)
    p.add_argument("--bg", default="000000", help="RRGGBB background")
    p.add_argument("--meta", default=None, help="optional camera sidecar JSON path")
    p.set_defaults(func=cmd_render)

    p = sub.add_parser("views", help="write the four axis views plus orbit frames")
    p.add_argument("--ply", required=True)
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--frames", type=int, default=36)
    p.add_argument("--size", type=int, default=256)
    p.add_argument("--bg", default="000000")
    p.set_defaults(func=cmd_views)

    p = sub.add_parser("script", help="drive a headless scripted client")
    p.add_argument("--file", required=True, help="steps: '<at_ms> <type> <json_body>'")
    p.add_argument("--connect", required=True, help="server host:port")
    p.add_argument("--as", dest="user", required=True, help="user id")
    p.add_argument("--session", required=True, help="session id")
    p.add_argument("--timeout", type=float, default=15.0)
    p.add_argument("--settle", type=int, default=300, help="ms to drain broadcasts at the end")
    p.add_argument("--no-wait-jobs", dest="wait_jobs", action="store_false",
                   help="do not block on pushed job stage changes")
    p.set_defaults(func=cmd_script)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
