"""
Security checks: peers that disagree, frames altered in transit, what openings reveal
"""

from typing import Dict, List, Optional

import numpy as np
import pytest

from src.mpc.beaver import beaver_hadamard
from src.mpc.dealer import DealerTape
from src.mpc.sharing import Party, ShareVector, rec
from src.ring.params import RingParams
from src.runtime import MessageType, decode_frame
from src.runtime.harness import prepare_sessions, run_sessions, run_two_party
from src.utils.errors import BlindSegError, ProtocolError
from src.utils.settings import Settings, TruncationMode
from tests.conftest import make_sessions, run_pair

EXACT = TruncationMode.EXACT


@pytest.fixture(scope="module")
def ring():
    return RingParams.generate(n=256, p_bits=20, q_bits=60)


@pytest.fixture
def run_settings():
    return Settings(_env_file=None, transport_timeout=60.0)


def test_spec_mismatch_stops_before_any_layer(ring, run_settings, tiny_relu_unet):
    """Test a peer with another network fingerprint is refused"""
    spec, weights, image = tiny_relu_unet
    alice, bob = prepare_sessions(spec, ring, mode=EXACT, settings=run_settings)
    bob.spec_hash = "f" * 64
    with pytest.raises(ProtocolError):
        run_sessions(alice, bob, spec, image, weights, mode=EXACT)
    assert alice.ledger.batch_and_gates == {}
    assert bob.ledger.batch_and_gates == {}


def test_dealer_mismatch_is_refused(ring, run_settings, tiny_relu_unet):
    """Test mismatched dealer seeds"""
    spec, weights, image = tiny_relu_unet
    alice, bob = prepare_sessions(spec, ring, mode=EXACT, settings=run_settings)
    bob.tape = DealerTape(99, Party.BOB, ring.p, bob.tape.limits)
    with pytest.raises(ProtocolError):
        run_sessions(alice, bob, spec, image, weights, mode=EXACT)


@pytest.mark.parametrize("direction,index", [(0, 5), (1, 3)])
def test_tampered_frame_aborts_the_run(ring, run_settings, tiny_relu_unet, direction, index):
    """Test a single flipped payload byte never yields a label map"""
    spec, weights, image = tiny_relu_unet

    def flip_last_byte(frame_direction: int, frame_index: int, data: bytes) -> bytes:
        if frame_direction != direction or frame_index != index:
            return data
        return data[:-1] + bytes([data[-1] ^ 0x01])

    with pytest.raises(BlindSegError):
        run_two_party(
            spec,
            image,
            weights,
            ring,
            mode=EXACT,
            settings=run_settings,
            tamper=flip_last_byte,
        )


@pytest.mark.slow
def test_random_bit_flips_and_drops_always_abort(ring, tiny_relu_unet):
    """Test 100 random flipped bits or dropped frames all abort"""
    spec, weights, image = tiny_relu_unet
    settings = Settings(_env_file=None, transport_timeout=10.0)
    frames = {0: 0, 1: 0}

    def count(direction: int, index: int, data: bytes) -> bytes:
        frames[direction] = max(frames[direction], index + 1)
        return data

    run_two_party(spec, image, weights, ring, mode=EXACT, settings=settings, tamper=count)
    assert min(frames.values()) > 10
    rng = np.random.default_rng(17)
    for trial in range(100):
        direction = int(rng.integers(0, 2))
        target = int(rng.integers(0, frames[direction]))
        drop = trial % 4 == 3
        position, bit = rng.random(), int(rng.integers(0, 8))

        def tamper(frame_direction: int, frame_index: int, data: bytes) -> Optional[bytes]:
            if frame_direction != direction or frame_index != target:
                return data
            if drop:
                return None
            at = int(position * len(data))
            return data[:at] + bytes([data[at] ^ (1 << bit)]) + data[at + 1 :]

        with pytest.raises(BlindSegError):
            run_two_party(
                spec, image, weights, ring, mode=EXACT, settings=settings, tamper=tamper
            )


def _chi_squared(samples: np.ndarray, cells: int) -> float:
    observed = np.bincount(samples.astype(np.int64), minlength=cells)
    expected = samples.size / cells
    return float(((observed - expected) ** 2 / expected).sum())


def test_beaver_openings_are_uniform(small_params):
    """Test wire openings d and e look uniform"""
    p, count = 17, 10_000
    sent: Dict[int, List[bytes]] = {0: [], 1: []}

    def record(direction: int, index: int, data: bytes) -> bytes:
        sent[direction].append(data)
        return data

    alice, bob = make_sessions(small_params, modulus=p, tamper=record)
    x_a = ShareVector.from_ints([5] * count, p, Party.ALICE)
    y_a = ShareVector.from_ints([11] * count, p, Party.ALICE)
    x_b = y_b = ShareVector.zeros(count, p, Party.BOB)
    z_a, z_b = run_pair(
        lambda: beaver_hadamard(alice, x_a, y_a, alice.tape.triples(count)),
        lambda: beaver_hadamard(bob, x_b, y_b, bob.tape.triples(count)),
    )
    assert set(rec(z_a, z_b).tolist()) == {(5 * 11) % p}

    halves = []
    for direction in (0, 1):
        (data,) = sent[direction]
        frame = decode_frame(data, alice.transport.max_frame_bytes)
        assert frame.kind == MessageType.SHARE_OPENING
        halves.append(np.frombuffer(frame.payload, dtype="<u8").astype(np.int64))
    opened = (halves[0] + halves[1]) % p
    d, e = opened[:count], opened[count:]
    # 0.999 quantiles: about 39 for 16 degrees of freedom, about 368 for 288
    assert _chi_squared(d, p) < 45.0
    assert _chi_squared(e, p) < 45.0
    assert _chi_squared(d * p + e, p * p) < 400.0


def test_bob_never_receives_labels(ring, run_settings, tiny_relu_unet):
    """Test only Alice reconstructs the label map"""
    spec, weights, image = tiny_relu_unet
    result = run_two_party(spec, image, weights, ring, mode=EXACT, settings=run_settings)
    assert result.bob.labels is None
    assert result.alice.labels is not None
    assert result.bob.trace == []
