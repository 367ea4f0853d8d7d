"""Minimal RFC 6455 bridge so browsers can speak the wire protocol.

Each wire frame (4-byte prefix + JSON) travels as one binary WebSocket
message server-to-client; inbound fragments are unmasked and fed straight to
the regular incremental frame decoder, so WS message boundaries don't matter.
"""

from __future__ import annotations

import base64
import hashlib
import socket
import struct
import threading

_GUID = b"258EAFA5-E914-47DA-95CA-C5AB0DC85B11"
_MAX_HANDSHAKE = 8192

_OP_CONT = 0x0
_OP_TEXT = 0x1
_OP_BINARY = 0x2
_OP_CLOSE = 0x8
_OP_PING = 0x9
_OP_PONG = 0xA


class WebSocketStream:
    """recv()/sendall()/close() adapter over an upgraded socket."""

    def __init__(self, sock: socket.socket):
        self._sock = sock
        self._buf = bytearray()
        self._send_lock = threading.Lock()
        self._closed = False

    # -- raw socket helpers ---------------------------------------------------

    def _read_exact(self, n: int) -> bytes | None:
        while len(self._buf) < n:
            chunk = self._sock.recv(65536)
            if not chunk:
                return None
            self._buf.extend(chunk)
        out = bytes(self._buf[:n])
        del self._buf[:n]
        return out

    # -- stream interface -------------------------------------------------------

    def recv(self, _hint: int = 65536) -> bytes:
        """Next chunk of application bytes; b'' once the peer closes."""
        while True:
            head = self._read_exact(2)
            if head is None:
                return b""
            opcode = head[0] & 0x0F
            masked = bool(head[1] & 0x80)
            length = head[1] & 0x7F
            if length == 126:
                ext = self._read_exact(2)
                if ext is None:
                    return b""
                (length,) = struct.unpack(">H", ext)
            elif length == 127:
                ext = self._read_exact(8)
                if ext is None:
                    return b""
                (length,) = struct.unpack(">Q", ext)
            mask = self._read_exact(4) if masked else b"\x00" * 4
            if mask is None:
                return b""
            payload = self._read_exact(length)
            if payload is None:
                return b""
            if masked:
                payload = bytes(b ^ mask[i % 4] for i, b in enumerate(payload))

            if opcode in (_OP_BINARY, _OP_TEXT, _OP_CONT):
                if payload:
                    return payload
            elif opcode == _OP_PING:
                self._send_frame(_OP_PONG, payload)
            elif opcode == _OP_CLOSE:
                try:
                    self._send_frame(_OP_CLOSE, payload[:2])
                except OSError:
                    pass
                return b""
            # pongs and empty fragments: keep reading

    def _send_frame(self, opcode: int, payload: bytes) -> None:
        n = len(payload)
        if n < 126:
            header = struct.pack(">BB", 0x80 | opcode, n)
        elif n < 65536:
            header = struct.pack(">BBH", 0x80 | opcode, 126, n)
        else:
            header = struct.pack(">BBQ", 0x80 | opcode, 127, n)
        with self._send_lock:
            self._sock.sendall(header + payload)

    def sendall(self, data: bytes) -> None:
        self._send_frame(_OP_BINARY, data)

    def shutdown(self, how: int) -> None:
        self._sock.shutdown(how)

    def close(self) -> None:
        if not self._closed:
            self._closed = True
            try:
                self._sock.close()
            except OSError:
                pass


def upgrade(sock: socket.socket) -> WebSocketStream | None:
    """Perform the HTTP upgrade; None (socket closed) when it isn't one."""
    buf = bytearray()
    try:
        while b"\r\n\r\n" not in buf:
            if len(buf) > _MAX_HANDSHAKE:
                raise ValueError("oversized handshake")
            chunk = sock.recv(4096)
            if not chunk:
                raise ValueError("peer closed during handshake")
            buf.extend(chunk)
        head = bytes(buf.split(b"\r\n\r\n", 1)[0]).decode("latin-1")
        lines = head.split("\r\n")
        headers = {}
        for line in lines[1:]:
            name, _, value = line.partition(":")
            headers[name.strip().lower()] = value.strip()
        if "websocket" not in headers.get("upgrade", "").lower():
            raise ValueError("not a websocket upgrade")
        key = headers["sec-websocket-key"].encode("latin-1")
    except (ValueError, KeyError, UnicodeDecodeError):
        try:
            sock.sendall(b"HTTP/1.1 400 Bad Request\r\nConnection: close\r\n\r\n")
        except OSError:
            pass
        sock.close()
        return None

    accept = base64.b64encode(hashlib.sha1(key + _GUID).digest()).decode("ascii")
    sock.sendall(
        b"HTTP/1.1 101 Switching Protocols\r\n"
        b"Upgrade: websocket\r\n"
        b"Connection: Upgrade\r\n"
        b"Sec-WebSocket-Accept: " + accept.encode("ascii") + b"\r\n\r\n"
    )
    return WebSocketStream(sock)


def start_ws_listener(server, listen: str) -> socket.socket:
    """Bind the bridge and hand upgraded connections to the server."""
    from .server import _split_addr

    host, port = _split_addr(listen)
    listener = socket.create_server((host, port))
    thread = threading.Thread(target=server._accept_loop, args=(listener, upgrade),
                              daemon=True, name="ws-accept")
    thread.start()
    return listener
