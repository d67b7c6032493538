"""
Protocol message framing

Frame layout, little-endian:
    length u32 (bytes after this field) | type u8 | sequence u64 | payload
"""

import struct
from dataclasses import dataclass
from enum import IntEnum
from typing import Tuple

from src.utils.errors import FrameError

_LENGTH = struct.Struct("<I")
_HEADER = struct.Struct("<IBQ")
HEADER_BYTES = _HEADER.size
LENGTH_BYTES = _LENGTH.size


class MessageType(IntEnum):
    CIPHERTEXT = 1
    SHARE_OPENING = 2
    GC_BLOB = 3
    OT_BLOCK = 4
    CONTROL = 5


@dataclass(frozen=True)
class Frame:
    kind: MessageType
    sequence: int
    payload: bytes

    def __len__(self) -> int:
        return HEADER_BYTES + len(self.payload)


def encode_frame(frame: Frame, max_bytes: int) -> bytes:
    size = len(frame)
    if size > max_bytes:
        raise FrameError(f"Frame of {size} bytes exceeds the {max_bytes}-byte limit")
    return _HEADER.pack(size - LENGTH_BYTES, int(frame.kind), frame.sequence) + frame.payload


def read_length(prefix: bytes) -> int:
    """Bytes still to read after a 4-byte length prefix"""
    if len(prefix) != LENGTH_BYTES:
        raise FrameError("Truncated frame length")
    return _LENGTH.unpack(prefix)[0]


def decode_frame(data: bytes, max_bytes: int) -> Frame:
    if len(data) < HEADER_BYTES:
        raise FrameError("Frame shorter than its header")
    if len(data) > max_bytes:
        raise FrameError(f"Frame of {len(data)} bytes exceeds the {max_bytes}-byte limit")
    length, kind, sequence = _HEADER.unpack_from(data, 0)
    if length != len(data) - LENGTH_BYTES:
        raise FrameError(f"Declared length {length} does not match {len(data) - LENGTH_BYTES}")
    try:
        message_type = MessageType(kind)
    except ValueError as e:
        raise FrameError(f"Unknown frame type {kind}") from e
    return Frame(message_type, sequence, bytes(data[HEADER_BYTES:]))


def split_header(data: bytes) -> Tuple[int, int]:
    """(type, sequence) of an encoded frame without validating the payload"""
    _, kind, sequence = _HEADER.unpack_from(data, 0)
    return kind, sequence
