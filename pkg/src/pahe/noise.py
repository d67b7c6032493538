"""
Worst-case noise bookkeeping

A ciphertext carries log2 of a bound on |c0 + c1*s - delta*m| (mod q).
Decryption stays correct while that bound is below delta / 2, so the
remaining budget is log2(delta / 2) minus the tracked bits.
"""

import math

from src.ring.params import RingParams

# Centered binomial error with eta = 21: variance 10.5, support [-21, 21]
ERROR_ETA = 21


def _bits(value: float) -> float:
    return math.log2(max(value, 1.0))


def fresh_secret_key_bits() -> float:
    return _bits(ERROR_ETA)


def fresh_public_key_bits(params: RingParams) -> float:
    # e*u + e1 + e2*s with ternary u, s
    return _bits(ERROR_ETA * (2 * params.n + 1))


def wrap_term(params: RingParams) -> int:
    """q mod p, the error contributed per plaintext wraparound"""
    return params.q % params.p


def add_bits(params: RingParams, a: float, b: float) -> float:
    return _bits(2.0**a + 2.0**b + wrap_term(params))


def add_plain_bits(params: RingParams, a: float) -> float:
    return _bits(2.0**a + wrap_term(params))


def plain_product_bits(params: RingParams, a: float, l1_norm: int) -> float:
    """Noise after multiplying by a plaintext whose centered coefficients sum to l1_norm"""
    if l1_norm == 0:
        return 0.0
    return _bits((2.0**a + wrap_term(params)) * l1_norm)


def keyswitch_bits(params: RingParams) -> float:
    base = 1 << params.decomp_base_bits
    digits = math.ceil(params.q.bit_length() / params.decomp_base_bits)
    return _bits(digits * params.n * (base - 1) * ERROR_ETA)


def rotate_bits(params: RingParams, a: float) -> float:
    return _bits(2.0**a + 2.0 ** keyswitch_bits(params))


def flood_bits(params: RingParams, a: float, flood: int) -> float:
    return _bits(2.0**a + 2.0 ** fresh_public_key_bits(params) + 2.0**flood)


def budget_bits(params: RingParams, noise: float) -> float:
    """Remaining budget; non-positive means decryption is no longer guaranteed"""
    return math.log2(params.delta / 2) - noise
