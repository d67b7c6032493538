"""
End-to-end two-party inference against the plaintext oracle
"""

import numpy as np
import pytest

from src.mpc.sharing import rec_signed
from src.ring.params import RingParams
from src.runtime.harness import prepare_sessions, run_sessions, run_two_party
from src.runtime.timing import Primitive
from src.unet.oracle import certain_labels, oracle_bounds, oracle_infer
from src.unet.spec import Variant
from src.utils.settings import Settings, TruncationMode
from tests.conftest import tiny_unet

EXACT = TruncationMode.EXACT
PROB = TruncationMode.PROBABILISTIC
SCALED_DIMS = [(1, 8, 8, 8), (1, 16, 16)]


@pytest.fixture(scope="module")
def ring():
    """Small ring with the production 20-bit plaintext width"""
    return RingParams.generate(n=256, p_bits=20, q_bits=60)


@pytest.fixture
def run_settings():
    return Settings(_env_file=None, transport_timeout=300.0)


def test_exact_relu_network_matches_oracle(ring, run_settings, tiny_relu_unet):
    """Test bit-identical labels and intermediates"""
    spec, weights, image = tiny_relu_unet
    result = run_two_party(
        spec, image, weights, ring, mode=EXACT, settings=run_settings, record_trace=True
    )
    expected = oracle_infer(spec, weights, image, ring.p)
    assert np.array_equal(result.labels, expected.labels)
    assert result.bob.labels is None

    alice_trace, bob_trace = result.alice.trace, result.bob.trace
    assert [name for name, _ in alice_trace] == [name for name, _ in bob_trace]
    assert len(alice_trace) > 10
    for (name, a), (_, b) in zip(alice_trace, bob_trace):
        assert np.array_equal(rec_signed(a, b), expected.intermediates[name].reshape(-1)), name


def test_exact_hybrid_network_matches_oracle(ring, run_settings, tiny_hybrid_unet):
    """Test the square-in-outer-batches variant"""
    spec, weights, image = tiny_hybrid_unet
    result = run_two_party(spec, image, weights, ring, mode=EXACT, settings=run_settings)
    expected = oracle_infer(spec, weights, image, ring.p)
    assert np.array_equal(result.labels, expected.labels)
    report = result.alice.report
    assert report.seconds(Primitive.SQUARE_MT) > 0
    assert report.seconds(Primitive.RELU_GC) > 0


def test_tapes_drawn_exactly_to_plan(ring, run_settings, tiny_relu_unet):
    """Test each party consumes precisely the planned correlations"""
    spec, weights, image = tiny_relu_unet
    alice, bob = prepare_sessions(spec, ring, mode=EXACT, settings=run_settings)
    run_sessions(alice, bob, spec, image, weights, mode=EXACT)
    for session in (alice, bob):
        assert session.tape.issued == session.tape.limits


def test_runs_are_deterministic(ring, run_settings, tiny_relu_unet):
    """Test equal seeds reproduce the transcript"""
    spec, weights, image = tiny_relu_unet
    first = run_two_party(spec, image, weights, ring, mode=EXACT, settings=run_settings, seed=3)
    second = run_two_party(spec, image, weights, ring, mode=EXACT, settings=run_settings, seed=3)
    assert first.alice.transcript == second.alice.transcript
    assert first.bob.transcript == second.bob.transcript
    assert np.array_equal(first.labels, second.labels)


def test_report_metadata(ring, run_settings, tiny_relu_unet):
    """Test the timing report carries the run's identity"""
    spec, weights, image = tiny_relu_unet
    result = run_two_party(spec, image, weights, ring, mode=EXACT, settings=run_settings)
    report = result.alice.report
    assert report.metadata["truncation"] == "exact"
    assert report.metadata["p"] == ring.p
    assert report.metadata["transcript"] == result.alice.transcript
    assert report.bytes_sent == result.bob.report.bytes_received
    assert {b.batch for b in report.batches} >= set(range(1, 9))
    assert sum(b.and_gates for b in report.batches) > 0


@pytest.mark.slow
@pytest.mark.parametrize("variant", [Variant.BASELINE, Variant.SQUARE])
def test_exact_variants_match_oracle(ring, run_settings, variant):
    """Test the max-pooling and all-square variants"""
    spec, weights, image = tiny_unet(variant, seed=2)
    result = run_two_party(spec, image, weights, ring, mode=EXACT, settings=run_settings)
    assert np.array_equal(result.labels, oracle_infer(spec, weights, image, ring.p).labels)


def _check_carry_bounds(result, spec, weights, image, p, dealer_seed):
    exact = oracle_infer(spec, weights, image, p)
    replay = oracle_infer(spec, weights, image, p, PROB, dealer_seed=dealer_seed)
    bounds = oracle_bounds(spec, weights, image, p)
    for (name, a), (_, b) in zip(result.alice.trace, result.bob.trace):
        value = rec_signed(a, b)
        lo, hi = (t.reshape(-1) for t in bounds[name])
        expected = exact.intermediates[name].reshape(-1)
        assert np.all(lo <= expected) and np.all(expected <= hi), name
        assert np.all(lo <= value) and np.all(value <= hi), name
        assert np.array_equal(value, replay.intermediates[name].reshape(-1)), name
    certain = certain_labels(bounds, spec)
    assert np.array_equal(result.labels[certain], exact.labels[certain])
    return replay


def test_probabilistic_run_stays_within_carry_bounds(ring, run_settings, tiny_hybrid_unet):
    """Test probabilistic intermediates stay in carry bounds"""
    spec, weights, image = tiny_hybrid_unet
    result = run_two_party(
        spec,
        image,
        weights,
        ring,
        mode=PROB,
        settings=run_settings,
        dealer_seed=4,
        record_trace=True,
    )
    replay = _check_carry_bounds(result, spec, weights, image, ring.p, 4)
    assert np.array_equal(result.labels, replay.labels)


def test_first_truncation_deviates_by_at_most_one(ring, run_settings, tiny_relu_unet):
    """Test one dealer-pair shift adds 0 or 1"""
    spec, weights, image = tiny_relu_unet
    result = run_two_party(
        spec, image, weights, ring, mode=PROB, settings=run_settings, record_trace=True
    )
    exact = oracle_infer(spec, weights, image, ring.p)
    for (name, a), (_, b) in zip(result.alice.trace, result.bob.trace):
        deviation = rec_signed(a, b) - exact.intermediates[name].reshape(-1)
        if name == "b4.up":
            assert set(np.unique(deviation).tolist()) <= {0, 1}
            break
        assert not deviation.any(), name
    else:
        pytest.fail("upsampling layer missing from the trace")


@pytest.mark.slow
@pytest.mark.parametrize("dims", SCALED_DIMS, ids=["3d", "2d"])
def test_probabilistic_scaled_networks_agree(params, run_settings, dims):
    """Test probabilistic labels over twenty seeds"""
    agree = total = 0
    for seed in range(20):
        spec, weights, image = tiny_unet(Variant.HYBRID, seed, dims, base_channels=4)
        result = run_two_party(
            spec,
            image,
            weights,
            params,
            mode=PROB,
            settings=run_settings,
            dealer_seed=seed + 1,
            record_trace=True,
        )
        replay = _check_carry_bounds(result, spec, weights, image, params.p, seed + 1)
        agree += int(np.sum(result.labels == replay.labels))
        total += result.labels.size
    assert agree / total >= 0.99
    assert agree == total


@pytest.mark.slow
@pytest.mark.parametrize("variant", [Variant.BASELINE, Variant.HYBRID, Variant.SQUARE])
@pytest.mark.parametrize("dims", SCALED_DIMS, ids=["3d", "2d"])
def test_exact_scaled_networks_match_oracle(params, run_settings, dims, variant):
    """Test exact labels over twenty seeds"""
    for seed in range(20):
        spec, weights, image = tiny_unet(variant, seed, dims, base_channels=4)
        result = run_two_party(
            spec, image, weights, params, mode=EXACT, settings=run_settings, dealer_seed=seed + 1
        )
        expected = oracle_infer(spec, weights, image, params.p)
        assert np.array_equal(result.labels, expected.labels), seed


@pytest.mark.slow
def test_socket_transport_run(ring, run_settings, tiny_relu_unet):
    """Test a loopback TCP run"""
    spec, weights, image = tiny_relu_unet
    result = run_two_party(
        spec,
        image,
        weights,
        ring,
        mode=EXACT,
        settings=run_settings,
        transport="socket",
        address="127.0.0.1:0",
    )
    assert np.array_equal(result.labels, oracle_infer(spec, weights, image, ring.p).labels)
