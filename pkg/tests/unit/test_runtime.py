"""
Unit tests for framing, transports, sessions, the schedule, timing and settings
"""

import time

import numpy as np
import pytest
from pydantic import ValidationError
from rich.table import Table

from src.mpc.dealer import CorrelationKind
from src.mpc.sharing import Party
from src.runtime import (
    Frame,
    MessageType,
    Primitive,
    TimingLedger,
    decode_frame,
    encode_frame,
    timing_report,
    transport_pair,
)
from src.runtime.frames import HEADER_BYTES, read_length
from src.runtime.schedule import (
    StepKind,
    build_schedule,
    rotation_steps_for,
    schedule_correlations,
)
from src.runtime.session import Phase, Session
from src.runtime.timing import render_table
from src.runtime.transport import parse_address
from src.unet.spec import Variant
from src.utils.errors import (
    FrameError,
    HandshakeError,
    ProtocolError,
    SessionAbortedError,
    TransportError,
)
from src.utils.settings import Settings, TruncationMode
from tests.conftest import make_sessions, run_pair, tiny_unet

LIMIT = 4096


def test_frame_roundtrip():
    """Test header fields and payload survive encoding"""
    data = encode_frame(Frame(MessageType.GC_BLOB, 7, b"abc"), LIMIT)
    assert len(data) == HEADER_BYTES + 3
    assert read_length(data[:4]) == len(data) - 4
    frame = decode_frame(data, LIMIT)
    assert frame == Frame(MessageType.GC_BLOB, 7, b"abc")


def test_frame_errors():
    """Test oversize, short, inconsistent and unknown-type frames"""
    with pytest.raises(FrameError):
        encode_frame(Frame(MessageType.CONTROL, 0, b"x" * LIMIT), LIMIT)
    with pytest.raises(FrameError):
        decode_frame(b"\x00" * 5, LIMIT)
    data = encode_frame(Frame(MessageType.CONTROL, 0, b"hello"), LIMIT)
    with pytest.raises(FrameError):
        decode_frame(data + b"!", LIMIT)
    with pytest.raises(FrameError):
        decode_frame(data[:4] + bytes([99]) + data[5:], LIMIT)
    with pytest.raises(FrameError):
        read_length(b"\x01")


@pytest.mark.parametrize("kind", ["mem", "socket"])
def test_transport_pair_duplex(kind):
    """Test frames flow both ways in order"""
    a, b = transport_pair(kind, address="127.0.0.1:0", max_frame_bytes=LIMIT, timeout=5.0)
    try:
        for i in range(3):
            a.send_raw(encode_frame(Frame(MessageType.CONTROL, i, bytes([i])), LIMIT))
        payloads = [decode_frame(b.recv_raw(), LIMIT).payload for _ in range(3)]
        assert payloads == [b"\x00", b"\x01", b"\x02"]
        b.send_raw(encode_frame(Frame(MessageType.OT_BLOCK, 0, b"back"), LIMIT))
        assert decode_frame(a.recv_raw(), LIMIT).payload == b"back"
        assert a.bytes_sent == b.bytes_received
    finally:
        a.close()
        b.close()


def test_memory_transport_limits_and_close():
    """Test the frame limit, the receive timeout and a closed peer"""
    a, b = transport_pair("mem", max_frame_bytes=LIMIT, timeout=0.05)
    with pytest.raises(FrameError):
        a.send_raw(b"x" * (LIMIT + 1))
    with pytest.raises(TransportError):
        b.recv_raw()
    a.close()
    with pytest.raises(TransportError):
        b.recv_raw()
    with pytest.raises(TransportError):
        a.send_raw(b"late")


def test_memory_transport_tamper_hook():
    """Test the hook rewrites one frame and drops another"""

    def tamper(direction, index, data):
        if index == 0:
            return None
        return data.upper() if direction == 0 else data

    a, b = transport_pair("mem", tamper=tamper, timeout=0.05)
    a.send_raw(b"dropped")
    a.send_raw(b"kept")
    b.send_raw(b"lost")
    b.send_raw(b"reply")
    assert b.recv_raw() == b"KEPT"
    assert a.recv_raw() == b"reply"
    with pytest.raises(TransportError):
        b.recv_raw()


def test_unknown_transport_and_bad_address():
    """Test transport kind and address parsing"""
    with pytest.raises(TransportError):
        transport_pair("carrier-pigeon")
    assert parse_address("tcp:localhost:9000") == ("localhost", 9000)
    with pytest.raises(TransportError):
        parse_address("localhost")


def test_session_open_shares(small_params):
    """Test both parties receive the other's opening half"""
    alice, bob = make_sessions(small_params)
    mine = np.array([1, 2, 3], dtype=np.uint64)
    theirs = np.array([7, 8, 9], dtype=np.uint64)
    got_a, got_b = run_pair(lambda: alice.open_shares(mine), lambda: bob.open_shares(theirs))
    assert got_a.tolist() == [7, 8, 9]
    assert got_b.tolist() == [1, 2, 3]
    assert alice.ledger.bytes_sent == bob.ledger.bytes_received


def test_session_rejects_wrong_length_and_kind(small_params):
    """Test malformed openings"""
    alice, bob = make_sessions(small_params)
    alice.send_array(MessageType.SHARE_OPENING, np.arange(4, dtype=np.uint64))
    with pytest.raises(FrameError):
        bob.recv_array(MessageType.SHARE_OPENING, 3)
    alice.send_control({"hello": 1})
    with pytest.raises(FrameError):
        bob.recv_bytes(MessageType.CIPHERTEXT)


def test_alice_needs_secret_key(small_params):
    """Test an Alice session without key material"""
    a_end, _ = transport_pair("mem")
    alice, _ = make_sessions(small_params)
    with pytest.raises(ProtocolError):
        Session(Party.ALICE, a_end, small_params, alice.tape, "spec")


def test_handshake_and_checkpoint(small_params):
    """Test a matching handshake"""
    alice, bob = make_sessions(small_params)
    bob.public_key = None
    run_pair(alice.handshake, bob.handshake)
    run_pair(alice.exchange_keys, bob.exchange_keys)
    assert bob.public_key is not None
    run_pair(lambda: alice.checkpoint("keys"), lambda: bob.checkpoint("keys"))
    assert alice.phase == Phase.SETUP
    assert alice.transcript_digest() != bob.transcript_digest()


def test_handshake_spec_mismatch(small_params):
    """Test parties with different spec hashes refuse to proceed"""
    alice, bob = make_sessions(small_params)
    bob.spec_hash = "another-spec"
    refusals = []

    def bob_side():
        try:
            bob.handshake()
        except HandshakeError as e:
            refusals.append(str(e))
            bob.abort("handshake mismatch")

    with pytest.raises(SessionAbortedError):
        run_pair(alice.handshake, bob_side, timeout=10.0)
    assert "spec_hash" in refusals[0]


def test_abort_reaches_peer(small_params):
    """Test an ABORT frame surfaces as SessionAbortedError"""
    alice, bob = make_sessions(small_params)
    bob.abort("weights missing")
    with pytest.raises(SessionAbortedError):
        alice.recv_control()


def test_phase_cannot_go_back(small_params):
    """Test phases only advance"""
    alice, _ = make_sessions(small_params)
    alice.advance(Phase.LAYERS)
    with pytest.raises(ProtocolError):
        alice.advance(Phase.SETUP)


def test_schedule_fuses_relu_shifts(tiny_relu_unet, params):
    """Test conv + ReLU + quantize collapse into one garbled step"""
    spec, _, _ = tiny_relu_unet
    steps = build_schedule(spec, params, flood_bits=24)
    assert steps[0].kind == StepKind.CONV and steps[0].fresh_input
    relu = steps[1]
    assert relu.kind == StepKind.RELU
    conv, act, quant = (spec.layer(f"b1.{n}") for n in ("conv1", "act1", "quant1"))
    assert relu.shift == conv.shift + act.shift + quant.shift
    assert relu.records == ("b1.quant1",)
    assert steps[-1].kind == StepKind.ARGMAX
    assert not any(s.fresh_input for s in steps[1:])
    assert [s.kind for s in steps].count(StepKind.AVG_POOL) == 3


def test_schedule_square_keeps_pre_shift(tiny_hybrid_unet, params):
    """Test squaring rescales before and after the product"""
    spec, _, _ = tiny_hybrid_unet
    steps = build_schedule(spec, params, flood_bits=24)
    square = steps[1]
    assert square.kind == StepKind.SQUARE
    assert square.pre_shift == spec.layer("b1.conv1").shift
    assert StepKind.RELU in {s.kind for s in steps}


def test_schedule_correlation_counts(tiny_relu_unet, params):
    """Test per-kind counts of the ReLU network"""
    spec, _, _ = tiny_relu_unet
    steps = build_schedule(spec, params, flood_bits=24)
    exact = schedule_correlations(steps, params.p, TruncationMode.EXACT)
    prob = schedule_correlations(steps, params.p, TruncationMode.PROBABILISTIC)
    relu_elements = sum(s.layer.volume for s in steps if s.kind == StepKind.RELU)
    assert exact[CorrelationKind.GC_MASK] >= relu_elements
    assert exact[CorrelationKind.TRIPLE] == 0
    assert prob[CorrelationKind.GC_MASK] == relu_elements
    assert exact[CorrelationKind.OT] > prob[CorrelationKind.OT] >= 2 * 20 * relu_elements


def test_rotation_steps_only_for_average_pooling(params):
    """Test max pooling needs no rotation keys"""
    relu_spec, _, _ = tiny_unet(Variant.RELU_AVG)
    baseline, _, _ = tiny_unet(Variant.BASELINE)
    assert rotation_steps_for(relu_spec, params)
    assert rotation_steps_for(baseline, params) == []


def test_ledger_excludes_nested_and_transport_time():
    """Test nested primitives and transport are not double counted"""
    ledger = TimingLedger()
    with ledger.primitive(Primitive.HOM_CONV, 10):
        time.sleep(0.01)
        with ledger.primitive(Primitive.TRUNCATION, 5):
            time.sleep(0.01)
        ledger.transport(0.5, 100, sent=True)
    assert ledger.seconds[Primitive.TRANSPORT] == 0.5
    assert ledger.bytes[Primitive.HOM_CONV] == 100
    assert ledger.elements[Primitive.HOM_CONV] == 10
    assert ledger.seconds[Primitive.HOM_CONV] < 0.5
    assert ledger.per_element(Primitive.TRUNCATION) == ledger.seconds[Primitive.TRUNCATION] / 5
    assert ledger.per_element(Primitive.ARGMAX_GC) == 0.0


def test_timing_report_percentages():
    """Test shares sum to 100 and batches carry their gate counts"""
    ledger = TimingLedger()
    ledger.batch = 1
    with ledger.primitive(Primitive.RELU_GC, 4):
        time.sleep(0.01)
        ledger.record_gates(40)
    ledger.batch = 2
    with ledger.primitive(Primitive.SQUARE_MT, 4):
        time.sleep(0.01)
    report = timing_report(ledger, "alice", {"spec": "tiny"})
    assert sum(row.percent for row in report.primitives) == pytest.approx(100.0, abs=0.05)
    assert [b.batch for b in report.batches] == [1, 2]
    assert report.batches[0].and_gates == 40
    assert report.batches[0].table_rows == 160
    assert report.share(Primitive.RELU_GC) > 0
    assert report.metadata["spec"] == "tiny"
    assert "cpu_count" in report.host
    assert isinstance(render_table(report), Table)


def test_settings_from_environment(monkeypatch):
    """Test the BLINDSEG_ prefix and validation"""
    monkeypatch.setenv("BLINDSEG_FLOOD_BITS", "30")
    monkeypatch.setenv("BLINDSEG_TRUNCATION_MODE", "prob")
    settings = Settings(_env_file=None)
    assert settings.flood_bits == 30
    assert settings.truncation_mode == TruncationMode.PROBABILISTIC
    monkeypatch.setenv("BLINDSEG_MAX_FRAME_BYTES", "10")
    with pytest.raises(ValidationError):
        Settings(_env_file=None)
