"""Blocking client for the wire protocol, used by the CLI and headless tests.

A reader thread feeds every inbound frame into an inbox; ``request`` pairs
replies to requests by seq, and ``wait_for`` blocks until a broadcast matches
a predicate.  Every send and receive lands in ``transcript`` with a
millisecond timestamp.
"""

from __future__ import annotations

import socket
import threading
import time
from dataclasses import dataclass

from .wire import FrameDecoder, Message, ProtocolError, encode_message


class ClientClosed(ConnectionError):
    """The server closed the connection (or the socket failed)."""


@dataclass
class TranscriptEntry:
    direction: str          # "send" | "recv"
    at_ms: int              # since connect
    message: Message


class WireClient:
    def __init__(self, sock: socket.socket):
        self._sock = sock
        self._decoder = FrameDecoder()
        self._lock = threading.Condition()
        self._seq = 0
        self._inbox: list[Message] = []
        self._replies: dict[int, Message] = {}
        self._closed = False
        self._t0 = time.monotonic()
        self.transcript: list[TranscriptEntry] = []
        self._reader = threading.Thread(target=self._read_loop, daemon=True, name="client-reader")
        self._reader.start()

    @classmethod
    def connect(cls, address: str, timeout: float = 5.0) -> "WireClient":
        host, _, port = address.rpartition(":")
        sock = socket.create_connection((host, int(port)), timeout=timeout)
        sock.settimeout(None)
        return cls(sock)

    # -- plumbing -------------------------------------------------------------

    def _now_ms(self) -> int:
        return int((time.monotonic() - self._t0) * 1000)

    def _read_loop(self) -> None:
        try:
            while True:
                data = self._sock.recv(65536)
                if not data:
                    break
                for msg in self._decoder.feed(data):
                    with self._lock:
                        self.transcript.append(TranscriptEntry("recv", self._now_ms(), msg))
                        if msg.seq is not None:
                            self._replies[msg.seq] = msg
                        else:
                            self._inbox.append(msg)
                        self._lock.notify_all()
        except (OSError, ProtocolError):
            pass
        finally:
            with self._lock:
                self._closed = True
                self._lock.notify_all()

    def send(self, msg: Message) -> None:
        with self._lock:
            if self._closed:
                raise ClientClosed("connection is closed")
            self.transcript.append(TranscriptEntry("send", self._now_ms(), msg))
        self._sock.sendall(encode_message(msg))

    # -- API --------------------------------------------------------------------

    def request(self, msg_type: str, body: dict | None = None, timeout: float = 10.0) -> Message:
        """Send a request and return its reply (which may be an error message)."""
        with self._lock:
            self._seq += 1
            seq = self._seq
        self.send(Message(msg_type, body or {}, seq=seq))
        deadline = time.monotonic() + timeout
        with self._lock:
            while seq not in self._replies:
                remaining = deadline - time.monotonic()
                if self._closed and seq not in self._replies:
                    raise ClientClosed("connection closed before reply")
                if remaining <= 0 or not self._lock.wait(remaining):
                    raise TimeoutError(f"no reply to {msg_type} (seq {seq}) in {timeout}s")
            return self._replies.pop(seq)

    def hello(self, user: str, session: str, pose: dict | None = None,
              timeout: float = 10.0) -> Message:
        body = {"user": user, "session": session}
        if pose:
            body["pose"] = pose
        reply = self.request("hello", body, timeout=timeout)
        if reply.type != "welcome":
            raise ClientClosed(f"handshake failed: {reply.type} {reply.body}")
        return reply

    def wait_for(self, predicate, timeout: float = 10.0) -> Message:
        """Return the first inbox message matching ``predicate`` (consumes it)."""
        deadline = time.monotonic() + timeout
        with self._lock:
            scanned = 0
            while True:
                for i in range(scanned, len(self._inbox)):
                    if predicate(self._inbox[i]):
                        return self._inbox.pop(i)
                scanned = len(self._inbox)
                remaining = deadline - time.monotonic()
                if self._closed:
                    raise ClientClosed("connection closed while waiting")
                if remaining <= 0 or not self._lock.wait(remaining):
                    raise TimeoutError(f"no matching message in {timeout}s")

    def drain(self) -> list[Message]:
        with self._lock:
            out, self._inbox = self._inbox, []
            return out

    @property
    def closed(self) -> bool:
        with self._lock:
            return self._closed

    def close(self) -> None:
        # shutdown first: close() alone won't send FIN while the reader
        # thread still sits in recv() on the same descriptor
        try:
            self._sock.shutdown(socket.SHUT_RDWR)
        except OSError:
            pass
        try:
            self._sock.close()
        except OSError:
            pass
