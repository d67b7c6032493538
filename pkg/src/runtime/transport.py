"""
Ordered, reliable byte-frame transports between the two parties
"""

import queue
import socket
import time
from abc import ABC, abstractmethod
from typing import Callable, Optional, Tuple

from src.runtime.frames import LENGTH_BYTES, read_length
from src.utils.errors import FrameError, TransportError
from src.utils.logger import get_logger
from src.utils.settings import get_settings

logger = get_logger(__name__)

_CLOSED = object()

# Test hook: (direction index, frame index, frame bytes) -> frame bytes, or None to drop it
FrameTamper = Callable[[int, int, bytes], Optional[bytes]]


class Transport(ABC):
    """One party's end of a duplex frame channel"""

    def __init__(self, max_frame_bytes: Optional[int] = None, timeout: Optional[float] = None):
        settings = get_settings()
        self.max_frame_bytes = max_frame_bytes or settings.max_frame_bytes
        self.timeout = timeout or settings.transport_timeout
        self.bytes_sent = 0
        self.bytes_received = 0

    @abstractmethod
    def send_raw(self, data: bytes) -> None:
        """Send one encoded frame"""

    @abstractmethod
    def recv_raw(self) -> bytes:
        """Receive one encoded frame"""

    @abstractmethod
    def close(self) -> None:
        pass

    def __enter__(self) -> "Transport":
        return self

    def __exit__(self, *exc) -> None:
        self.close()


class MemoryTransport(Transport):
    """In-process endpoint backed by a pair of queues"""

    def __init__(
        self,
        outbox: "queue.Queue",
        inbox: "queue.Queue",
        direction: int = 0,
        tamper: Optional[FrameTamper] = None,
        **kwargs,
    ):
        super().__init__(**kwargs)
        self._outbox = outbox
        self._inbox = inbox
        self._direction = direction
        self._tamper = tamper
        self._sent_frames = 0
        self._closed = False

    def send_raw(self, data: bytes) -> None:
        if self._closed:
            raise TransportError("Transport is closed")
        if len(data) > self.max_frame_bytes:
            raise FrameError(f"Frame of {len(data)} bytes exceeds the limit")
        index = self._sent_frames
        self._sent_frames += 1
        if self._tamper is not None:
            tampered = self._tamper(self._direction, index, data)
            if tampered is None:
                return
            data = tampered
        self.bytes_sent += len(data)
        self._outbox.put(bytes(data))

    def recv_raw(self) -> bytes:
        try:
            item = self._inbox.get(timeout=self.timeout)
        except queue.Empty:
            raise TransportError(f"No frame within {self.timeout:.0f}s") from None
        if item is _CLOSED:
            self._inbox.put(_CLOSED)
            raise TransportError("Peer closed the connection")
        if len(item) > self.max_frame_bytes:
            raise FrameError(f"Frame of {len(item)} bytes exceeds the limit")
        self.bytes_received += len(item)
        return item

    def close(self) -> None:
        if not self._closed:
            self._closed = True
            self._outbox.put(_CLOSED)


class SocketTransport(Transport):
    """TCP endpoint; frames are read back using their length prefix"""

    def __init__(self, sock: socket.socket, **kwargs):
        super().__init__(**kwargs)
        self._sock = sock
        self._sock.settimeout(self.timeout)
        self._sock.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)

    def send_raw(self, data: bytes) -> None:
        if len(data) > self.max_frame_bytes:
            raise FrameError(f"Frame of {len(data)} bytes exceeds the limit")
        try:
            self._sock.sendall(data)
        except OSError as e:
            raise TransportError(f"Send failed: {e}") from e
        self.bytes_sent += len(data)

    def _recv_exact(self, size: int) -> bytes:
        chunks = []
        remaining = size
        while remaining:
            try:
                chunk = self._sock.recv(min(remaining, 1 << 20))
            except OSError as e:
                raise TransportError(f"Receive failed: {e}") from e
            if not chunk:
                raise TransportError("Peer closed the connection")
            chunks.append(chunk)
            remaining -= len(chunk)
        return b"".join(chunks)

    def recv_raw(self) -> bytes:
        prefix = self._recv_exact(LENGTH_BYTES)
        length = read_length(prefix)
        if length + LENGTH_BYTES > self.max_frame_bytes:
            raise FrameError(f"Incoming frame of {length + LENGTH_BYTES} bytes exceeds the limit")
        data = prefix + self._recv_exact(length)
        self.bytes_received += len(data)
        return data

    def close(self) -> None:
        try:
            self._sock.shutdown(socket.SHUT_RDWR)
        except OSError:
            pass
        self._sock.close()


def parse_address(address: str) -> Tuple[str, int]:
    """'tcp:HOST:PORT' or 'HOST:PORT' -> (host, port)"""
    if address.startswith("tcp:"):
        address = address[4:]
    host, _, port = address.rpartition(":")
    if not host or not port.isdigit():
        raise TransportError(f"Bad address '{address}', expected HOST:PORT")
    return host, int(port)


def listen(address: str, **kwargs) -> SocketTransport:
    """Bob's side: accept exactly one connection"""
    host, port = parse_address(address)
    with socket.create_server((host, port), reuse_port=False) as server:
        server.settimeout(kwargs.get("timeout") or get_settings().transport_timeout)
        logger.info(f"Waiting for a connection on {host}:{port}")
        try:
            conn, peer = server.accept()
        except OSError as e:
            raise TransportError(f"Accept failed on {host}:{port}: {e}") from e
    logger.info(f"Accepted connection from {peer[0]}:{peer[1]}")
    return SocketTransport(conn, **kwargs)


def connect(address: str, retries: Optional[int] = None, **kwargs) -> SocketTransport:
    """Alice's side: connect, retrying while the listener starts up"""
    host, port = parse_address(address)
    attempts = retries or get_settings().connect_retries
    last_error: Optional[OSError] = None
    for _ in range(attempts):
        try:
            return SocketTransport(socket.create_connection((host, port), timeout=5.0), **kwargs)
        except OSError as e:
            last_error = e
            time.sleep(0.1)
    raise TransportError(f"Could not connect to {host}:{port}: {last_error}")


def transport_pair(
    kind: str = "mem", address: Optional[str] = None, tamper: Optional[FrameTamper] = None, **kwargs
) -> Tuple[Transport, Transport]:
    """
    Linked (Alice, Bob) endpoints

    Args:
        kind: "mem" for in-process queues or "socket" for a loopback TCP pair
        address: HOST:PORT for the socket kind (port 0 picks a free port)
        tamper: Optional hook that rewrites or drops frames in fault-injection tests (mem only)
    """
    if kind == "mem":
        a_to_b: "queue.Queue" = queue.Queue()
        b_to_a: "queue.Queue" = queue.Queue()
        return (
            MemoryTransport(a_to_b, b_to_a, 0, tamper, **kwargs),
            MemoryTransport(b_to_a, a_to_b, 1, tamper, **kwargs),
        )
    if kind == "socket":
        host, port = parse_address(address or "127.0.0.1:0")
        with socket.create_server((host, port)) as server:
            client = socket.create_connection(server.getsockname()[:2])
            conn, _ = server.accept()
        return SocketTransport(client, **kwargs), SocketTransport(conn, **kwargs)
    raise TransportError(f"Unknown transport kind '{kind}'")
