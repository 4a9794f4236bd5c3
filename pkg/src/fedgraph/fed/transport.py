"""Message transports between one aggregator and its parties.

Both transports move encoded frames, never Python objects, so the in-process
simulation exercises exactly the bytes a socket run would send. Every frame
crossing the aggregator is appended to a transcript for later inspection.
"""

from __future__ import annotations

import queue
import socket
import threading
from dataclasses import dataclass, field

from ..errors import ConnectionLost, MalformedPayload, ProtocolError, ValidationError
from .wire import PROTOCOL_VERSION, FedMessage, decode_message, encode_message, read_frame

TO_PARTY = "down"
TO_AGGREGATOR = "up"
_CLOSED = object()


@dataclass
class Transcript:
    """Frames in the order the aggregator saw them: (direction, connection, frame)."""

    frames: list[tuple[str, int, bytes]] = field(default_factory=list)
    lock: threading.Lock = field(default_factory=threading.Lock, repr=False)

    def add(self, direction: str, conn: int, frame: bytes) -> None:
        with self.lock:
            self.frames.append((direction, conn, frame))

    def payload_bytes(self) -> bytes:
        return b"".join(f for _, _, f in self.frames)

    def messages(self) -> list[tuple[str, int, FedMessage]]:
        return [(d, c, decode_message(f)) for d, c, f in self.frames]


class AggregatorEndpoint:
    """Aggregator side: receive from any party, send to one connection."""

    transcript: Transcript

    def recv(self, timeout: float) -> tuple[int, FedMessage | None]:
        """Next (connection, message); message None means that connection closed.
        Raises ``queue.Empty`` on timeout."""
        raise NotImplementedError

    def send(self, conn: int, msg: FedMessage) -> None:
        raise NotImplementedError

    def close(self) -> None:
        pass


class PartyEndpoint:
    def send(self, msg: FedMessage) -> None:
        raise NotImplementedError

    def recv(self, timeout: float) -> FedMessage:
        raise NotImplementedError

    def close(self) -> None:
        pass


# ---------------------------------------------------------------- in-process


class InProcessHub(AggregatorEndpoint):
    def __init__(self) -> None:
        self.transcript = Transcript()
        self._inbox: queue.Queue = queue.Queue()
        self._outboxes: dict[int, queue.Queue] = {}
        self._lock = threading.Lock()

    def connect(self) -> InProcessParty:
        with self._lock:
            conn = len(self._outboxes)
            box: queue.Queue = queue.Queue()
            self._outboxes[conn] = box
        return InProcessParty(self, conn, box)

    def recv(self, timeout: float) -> tuple[int, FedMessage | None]:
        conn, frame = self._inbox.get(timeout=timeout)
        if frame is _CLOSED:
            return conn, None
        self.transcript.add(TO_AGGREGATOR, conn, frame)
        return conn, decode_message(frame)

    def send(self, conn: int, msg: FedMessage) -> None:
        frame = encode_message(msg)
        self.transcript.add(TO_PARTY, conn, frame)
        self._outboxes[conn].put(frame)

    def close(self) -> None:
        for box in self._outboxes.values():
            box.put(_CLOSED)


class InProcessParty(PartyEndpoint):
    def __init__(self, hub: InProcessHub, conn: int, box: queue.Queue) -> None:
        self._hub = hub
        self._conn = conn
        self._box = box
        self._closed = False

    def send(self, msg: FedMessage) -> None:
        if self._closed:
            raise ConnectionLost("endpoint is closed")
        self._hub._inbox.put((self._conn, encode_message(msg)))

    def recv(self, timeout: float) -> FedMessage:
        try:
            frame = self._box.get(timeout=timeout)
        except queue.Empty:
            raise ConnectionLost(f"no message from the aggregator within {timeout}s") from None
        if frame is _CLOSED:
            raise ConnectionLost("aggregator closed the connection")
        return decode_message(frame)

    def close(self) -> None:
        if not self._closed:
            self._closed = True
            self._hub._inbox.put((self._conn, _CLOSED))


# ---------------------------------------------------------------- sockets


def _recv_exact(sock: socket.socket):
    def recv(n: int) -> bytes:
        chunks = []
        while n:
            chunk = sock.recv(n)
            if not chunk:
                break
            chunks.append(chunk)
            n -= len(chunk)
        return b"".join(chunks)

    return recv


def parse_address(addr: str) -> tuple[str, int]:
    host, sep, port = addr.rpartition(":")
    if not sep or not port.isdigit():
        raise ValidationError(f"address must be host:port, got {addr!r}")
    return host or "127.0.0.1", int(port)


class SocketServer(AggregatorEndpoint):
    """Listens for party connections; one reader thread per connection."""

    def __init__(self, host: str = "127.0.0.1", port: int = 0) -> None:
        self.transcript = Transcript()
        self._inbox: queue.Queue = queue.Queue()
        self._socks: dict[int, socket.socket] = {}
        self._lock = threading.Lock()
        self._listener = socket.create_server((host, port))
        self._listener.settimeout(0.2)
        self._stop = threading.Event()
        self._threads: list[threading.Thread] = []
        self._acceptor = threading.Thread(target=self._accept_loop, name="fed-accept", daemon=True)
        self._acceptor.start()

    @property
    def address(self) -> tuple[str, int]:
        return self._listener.getsockname()[:2]

    def _accept_loop(self) -> None:
        while not self._stop.is_set():
            try:
                sock, _ = self._listener.accept()
            except socket.timeout:
                continue
            except OSError:
                return
            sock.settimeout(None)
            sock.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
            with self._lock:
                conn = len(self._socks)
                self._socks[conn] = sock
            t = threading.Thread(target=self._reader, args=(conn, sock), name=f"fed-conn-{conn}", daemon=True)
            self._threads.append(t)
            t.start()

    def _reader(self, conn: int, sock: socket.socket) -> None:
        recv = _recv_exact(sock)
        try:
            version = recv(1)
            if version != bytes([PROTOCOL_VERSION]):
                raise MalformedPayload(f"unsupported protocol version {version!r}")
            while True:
                frame = read_frame(recv)
                self._inbox.put((conn, frame))
        except (EOFError, OSError, ProtocolError):
            pass
        self._inbox.put((conn, _CLOSED))

    def recv(self, timeout: float) -> tuple[int, FedMessage | None]:
        conn, frame = self._inbox.get(timeout=timeout)
        if frame is _CLOSED:
            return conn, None
        self.transcript.add(TO_AGGREGATOR, conn, frame)
        return conn, decode_message(frame)

    def send(self, conn: int, msg: FedMessage) -> None:
        frame = encode_message(msg)
        self.transcript.add(TO_PARTY, conn, frame)
        try:
            self._socks[conn].sendall(frame)
        except OSError as exc:
            raise ConnectionLost(f"connection {conn}: {exc}") from exc

    def close(self) -> None:
        self._stop.set()
        try:
            self._listener.close()
        except OSError:
            pass
        with self._lock:
            socks = list(self._socks.values())
        for s in socks:
            try:
                s.shutdown(socket.SHUT_RDWR)
            except OSError:
                pass
            s.close()


class SocketClient(PartyEndpoint):
    def __init__(self, host: str, port: int, connect_timeout: float = 10.0) -> None:
        try:
            self._sock = socket.create_connection((host, port), timeout=connect_timeout)
        except OSError as exc:
            raise ConnectionLost(f"cannot reach aggregator at {host}:{port}: {exc}") from exc
        self._sock.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
        self._sock.sendall(bytes([PROTOCOL_VERSION]))
        self._recv = _recv_exact(self._sock)

    def send(self, msg: FedMessage) -> None:
        try:
            self._sock.sendall(encode_message(msg))
        except OSError as exc:
            raise ConnectionLost(f"send failed: {exc}") from exc

    def recv(self, timeout: float) -> FedMessage:
        self._sock.settimeout(timeout)
        try:
            return decode_message(read_frame(self._recv))
        except EOFError:
            raise ConnectionLost("aggregator closed the connection") from None
        except socket.timeout:
            raise ConnectionLost(f"no message from the aggregator within {timeout}s") from None
        except OSError as exc:
            raise ConnectionLost(str(exc)) from exc

    def close(self) -> None:
        try:
            self._sock.close()
        except OSError:
            pass
