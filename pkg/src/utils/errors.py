"""
Exception hierarchy shared by every module
"""

from typing import Optional


class BlindSegError(Exception):
    """Base class for all errors raised by this package"""


class ParameterError(BlindSegError):
    """Invalid ring or scheme parameters"""


class NoiseBudgetError(BlindSegError):
    """Noise budget exhausted; decryption would not be trustworthy"""


class MissingRotationKeyError(BlindSegError):
    """Rotation requested for a step that has no key-switching key"""


class ShareMismatchError(BlindSegError):
    """Shares disagree in length, modulus or layout"""


class CorrelationError(BlindSegError):
    """Problem with dealer-provided correlated randomness"""


class CorrelationReuseError(CorrelationError):
    """A one-time correlation was consumed twice"""


class TapeExhaustedError(CorrelationError):
    """A dealer tape counter ran past its limit"""


class CircuitError(BlindSegError):
    """Invalid boolean circuit or bit-width"""


class GarbledDecodeError(BlindSegError):
    """Output label is not one of the two labels of its wire"""


class LayoutError(BlindSegError):
    """Tensor layout, tiling or rotation offset violates a plan invariant"""


class QuantizationError(BlindSegError):
    """Value does not fit the configured fixed-point width"""


class QuantizationOverflowError(QuantizationError):
    """Accumulator left the signed range of the plaintext modulus"""

    def __init__(self, layer: str, magnitude: int, limit: int):
        self.layer = layer
        self.magnitude = magnitude
        self.limit = limit
        super().__init__(f"Layer '{layer}' overflows: |value| = {magnitude} >= {limit}")


class TruncationBoundError(QuantizationError):
    """Probabilistic truncation precondition violated"""

    def __init__(self, layer: str, magnitude: int, bound: int):
        self.layer = layer
        self.magnitude = magnitude
        self.bound = bound
        super().__init__(
            f"Layer '{layer}' exceeds the probabilistic truncation bound: "
            f"|value| = {magnitude} >= {bound}"
        )


class SpecError(BlindSegError):
    """Network architecture is inconsistent"""


class FormatError(BlindSegError):
    """Malformed binary file or payload"""


class ProtocolError(BlindSegError):
    """Two-party protocol failure"""


class FrameError(ProtocolError):
    """Malformed, oversized or out-of-order frame"""


class TransportError(ProtocolError):
    """Transport closed, timed out or failed to connect"""


class HandshakeError(ProtocolError):
    """Parties disagree on spec, parameters or dealer commitment"""


class TranscriptMismatchError(ProtocolError):
    """Transcript hashes diverged at a checkpoint"""


class SessionAbortedError(ProtocolError):
    """The peer aborted the session"""

    def __init__(self, reason: Optional[str] = None):
        self.reason = reason
        super().__init__(f"Session aborted by peer: {reason or 'no reason given'}")
