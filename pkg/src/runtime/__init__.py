"""
Two-party runtime: framing, transports, timing, sessions and the executor
"""

from src.runtime.frames import Frame, MessageType, decode_frame, encode_frame
from src.runtime.timing import Primitive, TimingLedger, TimingReport, timing_report
from src.runtime.transport import MemoryTransport, SocketTransport, Transport, transport_pair

__all__ = [
    "Frame",
    "MemoryTransport",
    "MessageType",
    "Primitive",
    "SocketTransport",
    "TimingLedger",
    "TimingReport",
    "Transport",
    "decode_frame",
    "encode_frame",
    "timing_report",
    "transport_pair",
]
