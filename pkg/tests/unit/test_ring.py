"""
Unit tests for ring parameters, modular arithmetic and NTTs
"""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from pydantic import ValidationError

from src.ring import ConvStyle, Domain, ModPoly, ModulusId, RingParams
from src.ring.modarith import add_mod, as_residues, centered, mul_mod, sub_mod
from src.ring.ntt import ntt_forward, ntt_inverse, pointwise_mul, poly_conv_reference, poly_multiply
from src.ring.primes import find_ntt_prime, find_psi, is_prime
from src.utils.errors import ParameterError


@pytest.fixture(scope="module")
def ring17():
    """n = 4 with p = 17"""
    return RingParams.generate(n=4, p=17, q_bits=30)


def test_is_prime_small_values():
    """Test primality on known small values"""
    primes = [2, 3, 5, 17, 97, 257, 65537]
    composites = [0, 1, 4, 91, 561, 65535]
    assert all(is_prime(x) for x in primes)
    assert not any(is_prime(x) for x in composites)


def test_find_ntt_prime_congruence():
    """Test NTT-friendly prime search"""
    q = find_ntt_prime(30, 2 * 16 * 97)
    assert is_prime(q)
    assert (q - 1) % (2 * 16 * 97) == 0
    assert q.bit_length() == 30


def test_find_psi_order():
    """Test psi is a primitive 2n-th root"""
    psi = find_psi(17, 4)
    assert pow(psi, 8, 17) == 1
    assert pow(psi, 4, 17) == 16


def test_default_params():
    """Test production parameters match the documented sizes"""
    params = RingParams.default()
    assert params.n == 2048
    assert params.p.bit_length() == 20
    assert params.q.bit_length() == 60
    assert params.q % params.p == 1
    assert params.plain_bits == 20
    assert params.row_size == 1024


def test_generate_is_deterministic():
    """Test the same request yields the same parameters"""
    a = RingParams.generate(n=16, p_bits=12, q_bits=40)
    b = RingParams.generate(n=16, p_bits=12, q_bits=40)
    assert a == b
    assert a.fingerprint() == b.fingerprint()


def test_generate_rejects_bad_plain_prime():
    """Test an explicit p that is not 1 mod 2n"""
    with pytest.raises(ParameterError):
        RingParams.generate(n=16, p=13, q_bits=40)


def test_params_reject_non_power_of_two(ring17):
    """Test n must be a power of two"""
    data = ring17.model_dump()
    data["n"] = 6
    with pytest.raises(ValidationError):
        RingParams(**data)


def test_params_reject_composite_modulus(ring17):
    """Test q must be prime"""
    data = ring17.model_dump()
    data["q"] = ring17.q + 1
    with pytest.raises(ValidationError):
        RingParams(**data)


def test_params_reject_missing_headroom(ring17):
    """Test q must leave noise headroom above p"""
    with pytest.raises(ValidationError):
        RingParams(n=4, q=17, p=17, psi_q=ring17.psi_p, psi_p=ring17.psi_p)


def test_modulus_lookup(ring17):
    """Test modulus and delta accessors"""
    assert ring17.modulus(ModulusId.P) == 17
    assert ring17.modulus(ModulusId.Q) == ring17.q
    assert ring17.delta == ring17.q // 17


def test_modular_helpers():
    """Test add, sub, mul and centering"""
    a = as_residues([-1, 5, 16], 17)
    b = as_residues([3, 15, 16], 17)
    assert a.tolist() == [16, 5, 16]
    assert add_mod(a, b, 17).tolist() == [2, 3, 15]
    assert sub_mod(a, b, 17).tolist() == [13, 7, 0]
    assert mul_mod(a, b, 17).tolist() == [14, 7, 1]
    assert centered(np.array([0, 8, 9, 16], dtype=np.uint64), 17).tolist() == [0, 8, -8, -1]


@given(st.lists(st.integers(min_value=0, max_value=(1 << 60) - 1), min_size=1, max_size=16))
@settings(max_examples=50, deadline=None)
def test_mul_mod_large_modulus_matches_python(values):
    """Test the Shoup path against Python big integers"""
    q = RingParams.default().q
    a = np.array([v % q for v in values], dtype=np.uint64)
    b = np.array([(v * 7 + 3) % q for v in values], dtype=np.uint64)
    expected = [int(x) * int(y) % q for x, y in zip(a, b)]
    assert mul_mod(a, b, q).tolist() == expected


def test_cyclic_ntt_of_delta(ring17):
    """Test the delta polynomial transforms to all ones and back"""
    delta = ModPoly.from_ints([1, 0, 0, 0], ring17, ModulusId.P)
    hat = ntt_forward(delta, ring17, ConvStyle.CYCLIC)
    assert hat.domain == Domain.EVALUATION
    assert hat.coeffs.tolist() == [1, 1, 1, 1]
    assert ntt_inverse(hat, ring17, ConvStyle.CYCLIC).coeffs.tolist() == [1, 0, 0, 0]


def test_ntt_of_zero(ring17):
    """Test zero maps to zero"""
    zero = ModPoly.zeros(ring17, ModulusId.P, Domain.COEFFICIENT)
    assert ntt_forward(zero, ring17).coeffs.tolist() == [0, 0, 0, 0]


def test_cyclic_ntt_matches_direct_dft():
    """Test n = 8, p = 257 against the O(n^2) definition"""
    params = RingParams.generate(n=8, p=257, q_bits=40)
    x = [3, 1, 4, 1, 5, 9, 2, 6]
    omega = params.psi_p * params.psi_p % 257
    expected = [sum(x[i] * pow(omega, i * j, 257) for i in range(8)) % 257 for j in range(8)]
    out = ntt_forward(ModPoly.from_ints(x, params, ModulusId.P), params, ConvStyle.CYCLIC)
    assert out.coeffs.tolist() == expected


def test_negacyclic_ntt_evaluates_at_odd_powers():
    """Test index j holds the evaluation at psi^(2j+1)"""
    params = RingParams.generate(n=8, p=257, q_bits=40)
    x = [7, 0, 2, 0, 0, 1, 0, 5]
    psi = params.psi_p
    expected = [
        sum(x[i] * pow(psi, i * (2 * j + 1), 257) for i in range(8)) % 257 for j in range(8)
    ]
    out = ntt_forward(ModPoly.from_ints(x, params, ModulusId.P), params, ConvStyle.NEGACYCLIC)
    assert out.coeffs.tolist() == expected


def test_linear_style_has_no_transform(ring17):
    """Test LINEAR is refused by the transform"""
    poly = ModPoly.zeros(ring17, ModulusId.P, Domain.COEFFICIENT)
    with pytest.raises(ParameterError):
        ntt_forward(poly, ring17, ConvStyle.LINEAR)


def test_domain_checks(ring17):
    """Test NTT domain checks"""
    coeff = ModPoly.zeros(ring17, ModulusId.P, Domain.COEFFICIENT)
    with pytest.raises(ParameterError):
        ntt_inverse(coeff, ring17)
    with pytest.raises(ParameterError):
        pointwise_mul(coeff, coeff, ring17)


def test_from_ints_wrong_length(ring17):
    """Test the coefficient count must equal n"""
    with pytest.raises(ParameterError):
        ModPoly.from_ints([1, 2, 3], ring17, ModulusId.P)


def test_linear_reference_conv():
    """Test [1,2] * [3,4] mod 17"""
    assert poly_conv_reference([1, 2], [3, 4], 17).tolist() == [3, 10, 8]


def test_reference_folding():
    """Test cyclic and negacyclic folding of the linear result"""
    x, w = [1, 2, 3, 4], [0, 0, 0, 1]
    assert poly_conv_reference(x, w, 17, ConvStyle.CYCLIC).tolist() == [2, 3, 4, 1]
    assert poly_conv_reference(x, w, 17, ConvStyle.NEGACYCLIC).tolist() == [15, 14, 13, 1]


@pytest.mark.parametrize("style", [ConvStyle.CYCLIC, ConvStyle.NEGACYCLIC])
def test_poly_multiply_matches_reference(style, rng):
    """Test the transform product against the schoolbook product"""
    params = RingParams.generate(n=16, p=97, q_bits=50)
    for modulus_id in (ModulusId.P, ModulusId.Q):
        m = params.modulus(modulus_id)
        x = rng.integers(0, min(m, 1 << 62), size=16, dtype=np.uint64).astype(object) % m
        w = rng.integers(0, min(m, 1 << 62), size=16, dtype=np.uint64).astype(object) % m
        a = ModPoly.from_ints(list(x), params, modulus_id)
        b = ModPoly.from_ints(list(w), params, modulus_id)
        got = poly_multiply(a, b, params, style).coeffs.tolist()
        assert got == poly_conv_reference(x, w, m, style).tolist()


@given(st.lists(st.integers(min_value=-200, max_value=200), min_size=8, max_size=8))
@settings(max_examples=60, deadline=None)
def test_ntt_roundtrip(values):
    """Test inverse(forward(x)) == x for both styles"""
    params = RingParams.generate(n=8, p=257, q_bits=40)
    poly = ModPoly.from_ints(values, params, ModulusId.Q)
    for style in (ConvStyle.CYCLIC, ConvStyle.NEGACYCLIC):
        back = ntt_inverse(ntt_forward(poly, params, style), params, style)
        assert back.coeffs.tolist() == poly.coeffs.tolist()
