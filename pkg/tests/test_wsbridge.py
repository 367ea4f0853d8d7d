import base64
import hashlib
import os
import socket
import struct

import pytest

from splatspace.config import ServiceConfig
from splatspace.server import SpaceServer
from splatspace.store import AssetStore
from splatspace.wire import FrameDecoder, Message, encode_message

from conftest import make_asset


class _WsTestClient:
    """Masked client-side framing, written independently of the bridge."""

    def __init__(self, host, port):
        self.sock = socket.create_connection((host, port), timeout=5)
        key = base64.b64encode(os.urandom(16))
        self.sock.sendall(
            b"GET / HTTP/1.1\r\nHost: test\r\nUpgrade: websocket\r\n"
            b"Connection: Upgrade\r\nSec-WebSocket-Key: " + key +
            b"\r\nSec-WebSocket-Version: 13\r\n\r\n"
        )
        response = b""
        while b"\r\n\r\n" not in response:
            response += self.sock.recv(4096)
        assert b"101" in response.split(b"\r\n", 1)[0]
        want = base64.b64encode(hashlib.sha1(
            key + b"258EAFA5-E914-47DA-95CA-C5AB0DC85B11").digest())
        assert want in response
        self.decoder = FrameDecoder()

    def send_message(self, msg: Message):
        payload = encode_message(msg)
        mask = os.urandom(4)
        masked = bytes(b ^ mask[i % 4] for i, b in enumerate(payload))
        n = len(payload)
        if n < 126:
            header = struct.pack(">BB", 0x82, 0x80 | n)
        else:
            header = struct.pack(">BBH", 0x82, 0x80 | 126, n)
        self.sock.sendall(header + mask + masked)

    def recv_message(self) -> Message:
        while True:
            head = self._exact(2)
            opcode = head[0] & 0xF
            length = head[1] & 0x7F
            if length == 126:
                (length,) = struct.unpack(">H", self._exact(2))
            elif length == 127:
                (length,) = struct.unpack(">Q", self._exact(8))
            payload = self._exact(length)
            if opcode != 0x2:
                continue
            messages = self.decoder.feed(payload)
            if messages:
                return messages[0]

    def _exact(self, n):
        out = b""
        while len(out) < n:
            chunk = self.sock.recv(n - len(out))
            assert chunk, "bridge closed unexpectedly"
            out += chunk
        return out

    def close(self):
        self.sock.close()


@pytest.fixture
def ws_server(rng):
    assets = AssetStore()
    assets.asset_ids = [assets.register(make_asset(rng, 4))]
    srv = SpaceServer(config=ServiceConfig(ws_listen="127.0.0.1:0", view_resolution=16),
                      assets=assets)
    srv.start("127.0.0.1:0")
    ws_sock = srv._listeners[-1]
    host, port = ws_sock.getsockname()[:2]
    yield srv, host, port
    srv.stop()


def test_ws_handshake_and_session_roundtrip(ws_server):
    srv, host, port = ws_server
    client = _WsTestClient(host, port)
    client.send_message(Message("hello", {"user": "webby", "session": "ws-room"}, seq=1))
    welcome = client.recv_message()
    assert welcome.type == "welcome" and welcome.body["user"] == "webby"

    client.send_message(Message("op", {"op": "create_object",
                                       "asset_id": srv.assets.asset_ids[0]}, seq=2))
    reply = client.recv_message()
    while reply.type == "delta":
        reply = client.recv_message()
    assert reply.type == "op" and reply.body["status"] == "ok"
    client.close()


def test_ws_rejects_plain_http(ws_server):
    _, host, port = ws_server
    sock = socket.create_connection((host, port), timeout=5)
    sock.sendall(b"GET / HTTP/1.1\r\nHost: x\r\n\r\n")
    response = sock.recv(4096)
    assert response.startswith(b"HTTP/1.1 400")
    sock.close()
