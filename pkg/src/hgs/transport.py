"""Parent/child message transport.

Messages are JSON objects ``{"kind", "request_id", "payload"}``. On TCP each
message is framed as a 4-byte big-endian length followed by the UTF-8 JSON
body. The in-process channel passes the same encoded bytes to the handler
directly, so payload sizes are identical across transports.
"""

from __future__ import annotations

import itertools
import json
import logging
import socket
import socketserver
import struct
import threading
import time
from dataclasses import dataclass
from typing import Any, Callable

log = logging.getLogger(__name__)

HEADER = struct.Struct(">I")
MAX_FRAME = 1 << 28
DEFAULT_TIMEOUT = 30.0

MESSAGE_KINDS = (
    "match_grow_request",
    "match_grow_reply",
    "shrink_notify",
    "shrink_ack",
    "control",
    "control_reply",
    "error",
)

Handler = Callable[[bytes], bytes]


class TransportError(RuntimeError):
    pass


class TransportTimeout(TransportError):
    pass


class ConnectionLost(TransportError):
    pass


class FramingError(TransportError):
    pass


class RemoteError(RuntimeError):
    """The peer answered with an error message."""

    def __init__(self, message, error_type="Exception"):
        super().__init__(message)
        self.error_type = error_type


_request_ids = itertools.count(1)


def next_request_id() -> int:
    return next(_request_ids)


@dataclass
class RpcMessage:
    kind: str
    request_id: int
    payload: Any = None

    def __post_init__(self):
        if self.kind not in MESSAGE_KINDS:
            raise ValueError("unknown message kind %r" % self.kind)

    def encode(self) -> bytes:
        body = {"kind": self.kind, "request_id": self.request_id, "payload": self.payload}
        return json.dumps(body, separators=(",", ":")).encode("utf-8")

    @classmethod
    def decode(cls, data: bytes) -> "RpcMessage":
        try:
            body = json.loads(data.decode("utf-8"))
            return cls(body["kind"], int(body["request_id"]), body.get("payload"))
        except (UnicodeDecodeError, json.JSONDecodeError, KeyError, TypeError) as exc:
            raise FramingError("undecodable message: %s" % exc) from None

    def raise_for_error(self):
        if self.kind == "error":
            p = self.payload or {}
            raise RemoteError(p.get("error", "remote error"), p.get("type", "Exception"))


def error_reply(request_id: int, exc: BaseException) -> RpcMessage:
    # keep the original type when relaying an error from further up
    kind = exc.error_type if isinstance(exc, RemoteError) else type(exc).__name__
    return RpcMessage("error", request_id, {"error": str(exc), "type": kind})


# -- framing -----------------------------------------------------------------

def frame(data: bytes) -> bytes:
    if len(data) > MAX_FRAME:
        raise FramingError("frame of %d bytes exceeds limit" % len(data))
    return HEADER.pack(len(data)) + data


def _recv_exactly(sock: socket.socket, n: int, started: bool) -> bytes:
    chunks = []
    got = 0
    while got < n:
        try:
            chunk = sock.recv(min(n - got, 1 << 20))
        except socket.timeout:
            raise TransportTimeout("timed out waiting for peer") from None
        except OSError as exc:
            raise ConnectionLost(str(exc)) from None
        if not chunk:
            if started or got:
                raise FramingError("truncated frame: expected %d bytes, got %d" % (n, got))
            raise ConnectionLost("connection closed by peer")
        chunks.append(chunk)
        got += len(chunk)
    return b"".join(chunks)


def read_frame(sock: socket.socket) -> bytes:
    (length,) = HEADER.unpack(_recv_exactly(sock, HEADER.size, started=False))
    if length > MAX_FRAME:
        raise FramingError("frame length %d exceeds limit" % length)
    return _recv_exactly(sock, length, started=True)


def write_frame(sock: socket.socket, data: bytes) -> None:
    try:
        sock.sendall(frame(data))
    except socket.timeout:
        raise TransportTimeout("timed out sending to peer") from None
    except OSError as exc:
        raise ConnectionLost(str(exc)) from None


# -- channels ----------------------------------------------------------------

class InProcessChannel:
    transport = "intra"

    def __init__(self, handler: Handler):
        self.handler = handler
        self.last_request_nbytes = 0
        self.last_reply_nbytes = 0

    def call(self, msg: RpcMessage) -> RpcMessage:
        data = msg.encode()
        self.last_request_nbytes = len(data)
        reply = self.handler(data)
        self.last_reply_nbytes = len(reply)
        return RpcMessage.decode(reply)

    def close(self):
        pass


class TcpChannel:
    """Client side of the framed protocol; one persistent connection.

    ``latency`` adds a fixed delay per call to emulate a remote link.
    No retries: a resent grow could allocate twice.
    """

    transport = "inter"

    def __init__(self, address: tuple[str, int], timeout: float = DEFAULT_TIMEOUT,
                 latency: float = 0.0):
        self.address = tuple(address)
        self.timeout = timeout
        self.latency = latency
        self._sock: socket.socket | None = None
        self._lock = threading.Lock()
        self.last_request_nbytes = 0
        self.last_reply_nbytes = 0

    def _connect(self) -> socket.socket:
        if self._sock is None:
            try:
                self._sock = socket.create_connection(self.address, timeout=self.timeout)
            except socket.timeout:
                raise TransportTimeout("timed out connecting to %s:%d" % self.address) from None
            except OSError as exc:
                raise ConnectionLost("cannot connect to %s:%d: %s"
                                     % (self.address + (exc,))) from None
            self._sock.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
            self._sock.settimeout(self.timeout)
        return self._sock

    def call(self, msg: RpcMessage) -> RpcMessage:
        with self._lock:
            sock = self._connect()
            data = msg.encode()
            self.last_request_nbytes = len(data)
            if self.latency:
                time.sleep(self.latency)
            try:
                write_frame(sock, data)
                reply = read_frame(sock)
            except TransportError:
                self.close()
                raise
            self.last_reply_nbytes = len(reply)
            decoded = RpcMessage.decode(reply)
            if decoded.request_id != msg.request_id:
                self.close()
                raise FramingError("reply id %d does not match request %d"
                                   % (decoded.request_id, msg.request_id))
            return decoded

    def close(self):
        if self._sock is not None:
            try:
                self._sock.close()
            finally:
                self._sock = None


def _request_id_of(data: bytes) -> int:
    try:
        return RpcMessage.decode(data).request_id
    except (FramingError, ValueError):
        return 0


class _FrameHandler(socketserver.BaseRequestHandler):
    def handle(self):
        sock = self.request
        sock.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
        while True:
            try:
                data = read_frame(sock)
            except ConnectionLost:
                return
            except TransportError as exc:
                log.warning("dropping connection from %s: %s", self.client_address, exc)
                return
            try:
                reply = self.server.handler(data)
            except Exception as exc:  # handler bugs must not kill the server
                log.exception("handler failed")
                reply = error_reply(_request_id_of(data), exc).encode()
            try:
                write_frame(sock, reply)
            except TransportError:
                return


class _ThreadingServer(socketserver.ThreadingTCPServer):
    daemon_threads = True
    allow_reuse_address = True


class TcpServer:
    """Serve ``handler`` on a background thread."""

    def __init__(self, handler: Handler, host: str = "127.0.0.1", port: int = 0):
        self._server = _ThreadingServer((host, port), _FrameHandler)
        self._server.handler = handler
        self._thread = threading.Thread(target=self._server.serve_forever,
                                        kwargs={"poll_interval": 0.05}, daemon=True)
        self._thread.start()

    @property
    def address(self) -> tuple[str, int]:
        return self._server.server_address[:2]

    def close(self):
        self._server.shutdown()
        self._server.server_close()
        self._thread.join(timeout=5)


def parse_address(text: str) -> tuple[str, int]:
    host, sep, port = text.rpartition(":")
    if not sep or not port.isdigit():
        raise ValueError("expected host:port, got %r" % text)
    return host.strip("[]") or "127.0.0.1", int(port)
