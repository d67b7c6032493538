"""
One party's protocol session: framing, transcript, handshake and abort
"""

import hashlib
import json
import time
import uuid
from contextlib import contextmanager
from enum import IntEnum
from typing import Any, Dict, Iterator, List, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel

from src.mpc.dealer import DealerTape
from src.mpc.sharing import Party, ShareVector
from src.pahe.keys import PublicKey, RotationKeySet, SecretKey
from src.pahe.scheme import Ciphertext
from src.pahe.serialization import dump_ciphertexts, dump_keys, load_ciphertexts, load_keys_blob
from src.ring.params import RingParams
from src.runtime.frames import Frame, MessageType, decode_frame, encode_frame
from src.runtime.timing import Primitive, TimingLedger
from src.runtime.transport import Transport
from src.utils.errors import (
    BlindSegError,
    FrameError,
    HandshakeError,
    ProtocolError,
    SessionAbortedError,
    TranscriptMismatchError,
)
from src.utils.logger import PartyLoggerAdapter, get_party_logger
from src.utils.settings import Settings, get_settings

PROTOCOL_VERSION = 1


class Phase(IntEnum):
    CREATED = 0
    SETUP = 1
    LAYERS = 2
    READOUT = 3
    DONE = 4


class Handshake(BaseModel):
    """First control message of every session"""

    version: int
    role: str
    spec_hash: str
    params_hash: str
    dealer_commitment: str


class Session:
    """
    State of one party in one two-party run

    Args:
        party: ALICE or BOB
        transport: Connected transport endpoint
        params: Ring parameters (public)
        tape: This party's dealer tape
        spec_hash: Fingerprint of the network architecture
        seed: Seed of the party's private randomness
        secret_key: Alice's secret key (carries the public key)
        rotation_keys: Alice's rotation keys; Bob receives them during setup
        record_trace: Keep a copy of the party's share after every layer
    """

    def __init__(
        self,
        party: Party,
        transport: Transport,
        params: RingParams,
        tape: DealerTape,
        spec_hash: str,
        seed: Optional[int] = None,
        secret_key: Optional[SecretKey] = None,
        rotation_keys: Optional[RotationKeySet] = None,
        settings: Optional[Settings] = None,
        session_id: Optional[str] = None,
        record_trace: bool = False,
    ):
        if party is Party.ALICE and secret_key is None:
            raise ProtocolError("Alice's session needs the secret key")
        self.party = party
        self.transport = transport
        self.params = params
        self.tape = tape
        self.spec_hash = spec_hash
        self.settings = settings or get_settings()
        self.session_id = session_id or uuid.uuid4().hex[:12]
        self.rng = np.random.default_rng(seed)
        self.secret_key = secret_key
        self.public_key: Optional[PublicKey] = secret_key.public if secret_key else None
        self.rotation_keys = rotation_keys
        self.ledger = TimingLedger()
        self.log: PartyLoggerAdapter = get_party_logger(__name__, party.value, self.session_id)
        self.phase = Phase.CREATED
        self.trace: List[Tuple[str, ShareVector]] = []
        self.record_trace = record_trace
        self._seq_out = 0
        self._seq_in = 0
        self._sent = hashlib.sha256()
        self._received = hashlib.sha256()
        self._closed = False

    # -- phases -------------------------------------------------------------

    def advance(self, phase: Phase) -> None:
        if phase < self.phase:
            raise ProtocolError(f"Phase {phase.name} after {self.phase.name}")
        self.phase = phase

    @contextmanager
    def primitive(self, primitive: Primitive, elements: int = 0) -> Iterator[None]:
        with self.ledger.primitive(primitive, elements):
            yield

    def record(self, layer: str, shares: ShareVector) -> None:
        if self.record_trace:
            self.trace.append((layer, shares))

    # -- framing ------------------------------------------------------------

    def send_bytes(self, kind: MessageType, payload: bytes) -> None:
        data = encode_frame(Frame(kind, self._seq_out, payload), self.transport.max_frame_bytes)
        start = time.perf_counter()
        self.transport.send_raw(data)
        self.ledger.transport(time.perf_counter() - start, len(data), sent=True)
        self._sent.update(data)
        self._seq_out += 1

    def recv_bytes(self, kind: MessageType) -> bytes:
        start = time.perf_counter()
        data = self.transport.recv_raw()
        self.ledger.transport(time.perf_counter() - start, len(data), sent=False)
        frame = decode_frame(data, self.transport.max_frame_bytes)
        if frame.kind == MessageType.CONTROL:
            abort = _abort_reason(frame.payload)
            if abort is not None:
                raise SessionAbortedError(abort)
        if frame.sequence != self._seq_in:
            raise FrameError(f"Expected sequence {self._seq_in}, got {frame.sequence}")
        if frame.kind != kind:
            raise FrameError(f"Expected a {kind.name} frame, got {frame.kind.name}")
        self._received.update(data)
        self._seq_in += 1
        return frame.payload

    def send_array(self, kind: MessageType, values: np.ndarray) -> None:
        self.send_bytes(kind, np.ascontiguousarray(values, dtype="<u8").tobytes())

    def recv_array(self, kind: MessageType, length: Optional[int] = None) -> np.ndarray:
        payload = self.recv_bytes(kind)
        if len(payload) % 8:
            raise FrameError("Array payload is not a whole number of words")
        values = np.frombuffer(payload, dtype="<u8").astype(np.uint64)
        if length is not None and values.shape[0] != length:
            raise FrameError(f"Expected {length} words, got {values.shape[0]}")
        return values

    def open_shares(self, values: np.ndarray) -> np.ndarray:
        """Exchange opening halves; Alice speaks first"""
        if self.party is Party.ALICE:
            self.send_array(MessageType.SHARE_OPENING, values)
            return self.recv_array(MessageType.SHARE_OPENING, values.shape[0])
        peer = self.recv_array(MessageType.SHARE_OPENING, values.shape[0])
        self.send_array(MessageType.SHARE_OPENING, values)
        return peer

    def send_ciphertexts(self, cts: Sequence[Ciphertext]) -> None:
        self.send_bytes(MessageType.CIPHERTEXT, dump_ciphertexts(cts))

    def recv_ciphertexts(self, count: Optional[int] = None) -> List[Ciphertext]:
        cts = load_ciphertexts(self.recv_bytes(MessageType.CIPHERTEXT), self.params)
        if count is not None and len(cts) != count:
            raise FrameError(f"Expected {count} ciphertexts, got {len(cts)}")
        return cts

    def ciphertexts_per_frame(self) -> int:
        per_ct = 2 * self.params.n * 8 + 64
        return max(1, (self.transport.max_frame_bytes - 1024) // per_ct)

    def send_control(self, message: Dict[str, Any]) -> None:
        self.send_bytes(MessageType.CONTROL, json.dumps(message, sort_keys=True).encode())

    def recv_control(self) -> Dict[str, Any]:
        payload = self.recv_bytes(MessageType.CONTROL)
        try:
            message = json.loads(payload.decode())
        except (UnicodeDecodeError, json.JSONDecodeError) as e:
            raise FrameError(f"Malformed control message: {e}") from e
        if not isinstance(message, dict):
            raise FrameError("Control message is not an object")
        return message

    def _speak_first(self, message: Dict[str, Any]) -> Dict[str, Any]:
        if self.party is Party.ALICE:
            self.send_control(message)
            return self.recv_control()
        peer = self.recv_control()
        self.send_control(message)
        return peer

    # -- setup --------------------------------------------------------------

    def handshake(self) -> None:
        """Compare protocol version, spec hash, parameter hash and dealer commitment"""
        self.advance(Phase.SETUP)
        own = Handshake(
            version=PROTOCOL_VERSION,
            role=self.party.value,
            spec_hash=self.spec_hash,
            params_hash=self.params.fingerprint(),
            dealer_commitment=self.tape.commitment.hex(),
        )
        if self.party is Party.BOB:
            peer_msg = self.recv_control()
            peer = _parse_handshake(peer_msg)
            mismatch = _handshake_mismatch(own, peer)
            if mismatch:
                raise HandshakeError(f"Handshake mismatch on {mismatch}")
            self.send_control(own.model_dump())
        else:
            self.send_control(own.model_dump())
            peer = _parse_handshake(self.recv_control())
            mismatch = _handshake_mismatch(own, peer)
            if mismatch:
                raise HandshakeError(f"Handshake mismatch on {mismatch}")
        if peer.role != self.party.peer.value:
            raise HandshakeError(f"Peer claims role {peer.role}")
        self.log.info(f"Handshake ok (spec {self.spec_hash[:12]})")

    def exchange_keys(self) -> None:
        """Alice ships her public key and rotation keys to Bob"""
        if self.party is Party.ALICE:
            assert self.secret_key is not None and self.rotation_keys is not None
            blob = dump_keys(self.params, self.secret_key.public, self.rotation_keys)
            self.send_bytes(MessageType.CIPHERTEXT, blob)
            self.log.info(f"Sent evaluation keys ({len(blob):,} bytes)")
        else:
            _, public, rotation = load_keys_blob(
                self.recv_bytes(MessageType.CIPHERTEXT), self.params
            )
            self.public_key = public
            self.rotation_keys = rotation
            self.log.info(f"Received {len(rotation.keys)} key-switching keys")

    # -- transcript ---------------------------------------------------------

    def transcript_digest(self) -> str:
        return hashlib.sha256(self._sent.digest() + self._received.digest()).hexdigest()

    def checkpoint(self, label: str) -> None:
        """
        Compare running transcript hashes with the peer

        Raises:
            TranscriptMismatchError: a frame was altered in transit
        """
        own = {
            "checkpoint": label,
            "sent": self._sent.hexdigest(),
            "recv": self._received.hexdigest(),
        }
        peer = self._speak_first(own)
        if peer.get("checkpoint") != label:
            raise TranscriptMismatchError(
                f"Checkpoint '{label}' answered with {peer.get('checkpoint')}"
            )
        if peer.get("sent") != own["recv"] or peer.get("recv") != own["sent"]:
            raise TranscriptMismatchError(f"Transcripts diverge at checkpoint '{label}'")
        self.log.debug(f"Checkpoint '{label}' ok")

    # -- teardown -----------------------------------------------------------

    def abort(self, reason: str) -> None:
        """Best-effort ABORT frame, then close"""
        if self._closed:
            return
        try:
            payload = json.dumps({"abort": reason}).encode()
            self.transport.send_raw(
                encode_frame(
                    Frame(MessageType.CONTROL, self._seq_out, payload),
                    self.transport.max_frame_bytes,
                )
            )
        except (BlindSegError, OSError):
            pass
        self.log.warning(f"Session aborted: {reason}")
        self.close()

    def close(self) -> None:
        if not self._closed:
            self._closed = True
            self.transport.close()


def _abort_reason(payload: bytes) -> Optional[str]:
    try:
        message = json.loads(payload.decode())
    except (UnicodeDecodeError, json.JSONDecodeError):
        return None
    if isinstance(message, dict) and "abort" in message:
        return str(message["abort"])
    return None


def _parse_handshake(message: Dict[str, Any]) -> Handshake:
    try:
        return Handshake(**message)
    except (TypeError, ValueError) as e:
        raise HandshakeError(f"Malformed handshake: {e}") from e


def _handshake_mismatch(own: Handshake, peer: Handshake) -> Optional[str]:
    for field in ("version", "spec_hash", "params_hash", "dealer_commitment"):
        if getattr(own, field) != getattr(peer, field):
            return field
    return None
