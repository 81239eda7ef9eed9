"""
Wire codec for protocol frames: type (1 byte) || length (4 bytes) || payload
"""
from typing import Tuple

from app.core.errors import AbortReason, FrameError
from app.schemas.protocol import Frame, FrameType

HEADER_BYTES = 5
MAX_PAYLOAD = 16 * 1024 * 1024


def frame_encode(frame: Frame) -> bytes:
    if frame.length > MAX_PAYLOAD:
        raise FrameError(f"Payload of {frame.length} bytes exceeds {MAX_PAYLOAD}")
    return bytes([frame.type]) + frame.length.to_bytes(4, "big") + frame.payload


def decode_header(header: bytes) -> Tuple[FrameType, int]:
    """
    Raises:
        FrameError: short header, unknown type byte or over-length payload
    """
    if len(header) != HEADER_BYTES:
        raise FrameError(f"Frame header needs {HEADER_BYTES} bytes, got {len(header)}")
    try:
        frame_type = FrameType(header[0])
    except ValueError:
        raise FrameError(f"Unknown frame type {header[0]}") from None
    length = int.from_bytes(header[1:], "big")
    if length > MAX_PAYLOAD:
        raise FrameError(f"Declared length {length} exceeds {MAX_PAYLOAD}")
    return frame_type, length


def frame_decode(data: bytes) -> Frame:
    """
    Decode exactly one frame.

    Raises:
        FrameError: truncated data, trailing bytes or a malformed header
    """
    frame_type, length = decode_header(data[:HEADER_BYTES])
    if len(data) != HEADER_BYTES + length:
        raise FrameError(f"Length field says {length} bytes, "
                         f"frame carries {len(data) - HEADER_BYTES}")
    return Frame(type=frame_type, payload=data[HEADER_BYTES:])


def abort_payload(reason: AbortReason, detail: str = "") -> bytes:
    return bytes([reason]) + detail.encode("utf-8")


def parse_abort(payload: bytes) -> Tuple[AbortReason, str]:
    """Reason code and detail of an ABORT frame (unknown codes read as PROTOCOL)"""
    if not payload:
        return AbortReason.PROTOCOL, ""
    try:
        reason = AbortReason(payload[0])
    except ValueError:
        reason = AbortReason.PROTOCOL
    return reason, payload[1:].decode("utf-8", errors="replace")
