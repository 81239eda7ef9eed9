"""
Classical channel between the two parties: an in-process queue pair for
deterministic runs, a TCP socket pair for integration runs, and the
authenticated frame link both parties speak over either backend.
"""
import logging
import queue
import socket
import threading
from typing import Callable, List, Optional, Tuple

from app.core.auth import Authenticator
from app.core.config import settings
from app.core.errors import (
    AbortReason,
    AuthenticationFailure,
    ChannelTimeout,
    FrameError,
    ProtocolAbort,
)
from app.schemas.ledger import MacTag
from app.schemas.protocol import Frame, FrameType
from app.utils.frames import (
    HEADER_BYTES,
    abort_payload,
    decode_header,
    frame_decode,
    frame_encode,
    parse_abort,
)

logger = logging.getLogger(__name__)

# (sender name, frame index, raw frame) -> raw frame actually delivered
TamperHook = Callable[[str, int, bytes], bytes]

MAC_TAG_BYTES = 8


class Channel:
    """Raw frame transport of one endpoint"""

    name: str = ""

    def send(self, raw: bytes) -> None:
        raise NotImplementedError

    def recv(self, timeout: Optional[float] = None) -> bytes:
        raise NotImplementedError

    def close(self) -> None:
        pass


class InProcessChannel(Channel):
    """One end of a pair of in-memory queues; the transcript is shared by both ends"""

    def __init__(self, name: str, outbox: queue.Queue, inbox: queue.Queue,
                 transcript: List[Tuple[str, bytes]], lock: threading.Lock,
                 tamper: Optional[TamperHook] = None):
        self.name = name
        self.outbox = outbox
        self.inbox = inbox
        self.transcript = transcript
        self.lock = lock
        self.tamper = tamper
        self.sent = 0

    @classmethod
    def pair(cls, tamper: Optional[TamperHook] = None) -> Tuple["InProcessChannel",
                                                               "InProcessChannel"]:
        """Connected (alice, bob) endpoints"""
        a_to_b: queue.Queue = queue.Queue()
        b_to_a: queue.Queue = queue.Queue()
        transcript: List[Tuple[str, bytes]] = []
        lock = threading.Lock()
        return (cls("alice", a_to_b, b_to_a, transcript, lock, tamper),
                cls("bob", b_to_a, a_to_b, transcript, lock, tamper))

    def send(self, raw: bytes) -> None:
        if self.tamper is not None:
            raw = self.tamper(self.name, self.sent, raw)
        self.sent += 1
        with self.lock:
            self.transcript.append((self.name, raw))
        self.outbox.put(raw)

    def recv(self, timeout: Optional[float] = None) -> bytes:
        timeout = settings.CHANNEL_TIMEOUT_S if timeout is None else timeout
        try:
            return self.inbox.get(timeout=timeout)
        except queue.Empty:
            raise ChannelTimeout(f"{self.name}: no frame within {timeout}s") from None


class SocketChannel(Channel):
    """Frame stream over a connected stream socket"""

    def __init__(self, name: str, sock: socket.socket):
        self.name = name
        self.sock = sock
        self.transcript: List[Tuple[str, bytes]] = []

    @classmethod
    def tcp_pair(cls, host: str = "127.0.0.1") -> Tuple["SocketChannel", "SocketChannel"]:
        """Connected (alice, bob) endpoints over a loopback TCP connection"""
        with socket.create_server((host, 0)) as server:
            client = socket.create_connection(server.getsockname())
            peer, _ = server.accept()
        for sock in (client, peer):
            sock.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
        return cls("alice", client), cls("bob", peer)

    def send(self, raw: bytes) -> None:
        self.transcript.append((self.name, raw))
        try:
            self.sock.sendall(raw)
        except OSError as e:
            raise ProtocolAbort(AbortReason.PROTOCOL, f"send failed: {str(e)}") from e

    def _read_exact(self, size: int) -> bytes:
        chunks = []
        remaining = size
        while remaining:
            try:
                chunk = self.sock.recv(remaining)
            except socket.timeout:
                raise ChannelTimeout(f"{self.name}: read timed out") from None
            if not chunk:
                raise FrameError("Connection closed mid-frame")
            chunks.append(chunk)
            remaining -= len(chunk)
        return b"".join(chunks)

    def recv(self, timeout: Optional[float] = None) -> bytes:
        self.sock.settimeout(settings.CHANNEL_TIMEOUT_S if timeout is None else timeout)
        header = self._read_exact(HEADER_BYTES)
        _, length = decode_header(header)
        return header + self._read_exact(length)

    def close(self) -> None:
        try:
            self.sock.close()
        except OSError:
            pass


class FrameLink:
    """
    Authenticated frame exchange of one party: every non-ABORT frame is
    followed by a MAC frame over its encoding.
    """

    def __init__(self, channel: Channel, authenticator: Authenticator,
                 timeout: Optional[float] = None):
        self.channel = channel
        self.auth = authenticator
        self.timeout = timeout
        self.aborted = False

    def send_frame(self, frame_type: FrameType, payload: bytes) -> None:
        if self.aborted:
            raise ProtocolAbort(AbortReason.PROTOCOL, "link already aborted")
        raw = frame_encode(Frame(type=frame_type, payload=payload))
        tag = self.auth.tag(raw)
        self.channel.send(raw)
        self.channel.send(frame_encode(Frame(type=FrameType.MAC, payload=tag.to_bytes())))

    def _recv_raw(self) -> Tuple[Frame, bytes]:
        try:
            raw = self.channel.recv(self.timeout)
            frame = frame_decode(raw)
        except FrameError as e:
            raise ProtocolAbort(AbortReason.PROTOCOL, str(e)) from e
        if frame.type == FrameType.ABORT:
            reason, detail = parse_abort(frame.payload)
            self.aborted = True
            raise ProtocolAbort(reason, f"peer: {detail}")
        return frame, raw

    def recv_frame(self, expected: FrameType) -> bytes:
        """
        Receive one authenticated frame of the expected type.

        Raises:
            ProtocolAbort: peer abort, MAC failure, malformed or unexpected frame
        """
        frame, raw = self._recv_raw()
        mac_frame, _ = self._recv_raw()
        if mac_frame.type != FrameType.MAC:
            raise ProtocolAbort(AbortReason.PROTOCOL, f"expected MAC, got {mac_frame.type.name}")
        if len(mac_frame.payload) != MAC_TAG_BYTES:
            raise ProtocolAbort(AbortReason.MAC, "malformed MAC tag")
        try:
            self.auth.verify(raw, MacTag.from_bytes(mac_frame.payload))
        except AuthenticationFailure as e:
            raise ProtocolAbort(AbortReason.MAC, str(e)) from e
        if frame.type != expected:
            raise ProtocolAbort(AbortReason.PROTOCOL,
                                f"expected {expected.name}, got {frame.type.name}")
        return frame.payload

    def send_abort(self, reason: AbortReason, detail: str = "") -> None:
        """Best-effort ABORT frame; nothing is sent after it"""
        if self.aborted:
            return
        self.aborted = True
        try:
            self.channel.send(frame_encode(Frame(type=FrameType.ABORT,
                                                 payload=abort_payload(reason, detail))))
        except Exception as e:
            logger.debug(f"ABORT frame not delivered: {e}")
