"""
BFV-style packed additively homomorphic encryption

Operations are pure functions returning new ciphertexts. Every ciphertext
carries an advisory worst-case noise estimate (src.pahe.noise); decryption
also measures the actual noise and refuses results with no margin left.
"""

import math
from dataclasses import dataclass
from typing import Dict, List, Sequence, Union

import numpy as np

from src.pahe import noise
from src.pahe.encoding import Encoding, PlainVector, get_encoder
from src.pahe.keys import (
    ROW_SWAP,
    KeySwitchKey,
    PublicKey,
    RotationKeySet,
    SecretKey,
    apply_automorphism,
    decomposition_digits,
    q_tables,
    sample_error,
    sample_ternary,
    sample_uniform,
)
from src.ring.modarith import (
    add_mod,
    as_residues,
    centered,
    mul_shoup,
    neg_mod,
    scalar_mul_mod,
    shoup_precompute,
    sub_mod,
)
from src.ring.ntt import ConvStyle, Domain, ModPoly, forward_array, inverse_array
from src.ring.params import ModulusId, RingParams
from src.utils.errors import NoiseBudgetError, ParameterError

# Decryption refuses results whose measured budget is below this many bits
MIN_MEASURED_BUDGET = 1.0
LIMB_BITS = 30
LIMB_MASK = (1 << LIMB_BITS) - 1


@dataclass(frozen=True)
class Ciphertext:
    """RLWE pair (c0, c1) in coefficient form mod q"""

    params: RingParams
    c0: ModPoly
    c1: ModPoly
    layout: Encoding
    noise_bits: float

    @property
    def noise_budget(self) -> float:
        return noise.budget_bits(self.params, self.noise_bits)

    @classmethod
    def build(
        cls,
        params: RingParams,
        c0: np.ndarray,
        c1: np.ndarray,
        layout: Encoding,
        noise_bits: float,
    ) -> "Ciphertext":
        return cls(
            params,
            ModPoly(c0, Domain.COEFFICIENT, ModulusId.Q),
            ModPoly(c1, Domain.COEFFICIENT, ModulusId.Q),
            layout,
            noise_bits,
        )


def _check_pair(a: Ciphertext, b: Ciphertext) -> None:
    if a.params != b.params:
        raise ParameterError("Ciphertexts use different parameters")
    if a.layout != b.layout:
        raise ParameterError(f"Ciphertext layouts differ: {a.layout.value} vs {b.layout.value}")


def _check_plain(c: Ciphertext, v: PlainVector) -> None:
    if v.encoding != c.layout:
        raise ParameterError(
            f"Plaintext encoding {v.encoding.value} does not match ciphertext layout "
            f"{c.layout.value}"
        )
    if len(v) != c.params.n:
        raise ParameterError(f"Plain vector has {len(v)} slots, expected {c.params.n}")


def _scaled_message(params: RingParams, v: PlainVector) -> np.ndarray:
    return scalar_mul_mod(get_encoder(params).message(v), params.delta, params.q)


def enc(
    key: Union[SecretKey, PublicKey], v: PlainVector, rng: np.random.Generator
) -> Ciphertext:
    """
    Encrypt a plaintext vector

    Args:
        key: Secret key (symmetric encryption) or public key
        v: Plaintext; its encoding becomes the ciphertext layout
        rng: Encryption randomness

    Returns:
        Fresh ciphertext
    """
    params = key.params
    n, q = params.n, params.q
    if len(v) != n:
        raise ParameterError(f"Plain vector has {len(v)} slots, expected {n}")
    dm = _scaled_message(params, v)

    if isinstance(key, SecretKey):
        a = sample_uniform(rng, n, q)
        e = as_residues(sample_error(rng, n), q)
        c0 = add_mod(sub_mod(e, key.s_op.times(a, params), q), dm, q)
        return Ciphertext.build(params, c0, a, v.encoding, noise.fresh_secret_key_bits())

    c0, c1 = _public_zero(key, rng)
    return Ciphertext.build(
        params, add_mod(c0, dm, q), c1, v.encoding, noise.fresh_public_key_bits(params)
    )


def _public_zero(pk: PublicKey, rng: np.random.Generator):
    params = pk.params
    n, q = params.n, params.q
    tables = q_tables(params)
    u_hat = forward_array(as_residues(sample_ternary(rng, n), q), tables, ConvStyle.NEGACYCLIC)
    e1 = as_residues(sample_error(rng, n), q)
    e2 = as_residues(sample_error(rng, n), q)
    bu = inverse_array(pk.b_op.times_hat(u_hat, params), tables, ConvStyle.NEGACYCLIC)
    au = inverse_array(pk.a_op.times_hat(u_hat, params), tables, ConvStyle.NEGACYCLIC)
    return add_mod(bu, e1, q), add_mod(au, e2, q)


def _phase(sk: SecretKey, c: Ciphertext) -> np.ndarray:
    """c0 + c1*s mod q"""
    return add_mod(c.c0.coeffs, sk.s_op.times(c.c1.coeffs, sk.params), sk.params.q)


def noise_budget(sk: SecretKey, c: Ciphertext) -> float:
    """Measured invariant-noise budget in bits"""
    params = sk.params
    x = _phase(sk, c).astype(object)
    residue = (x * params.p) % params.q
    half = params.q // 2
    magnitude = max(int(r if r <= half else params.q - r) for r in residue)
    if magnitude == 0:
        return float(params.q.bit_length())
    return math.log2(params.q) - math.log2(2 * magnitude)


def dec(sk: SecretKey, c: Ciphertext) -> PlainVector:
    """
    Decrypt to a plaintext vector in the ciphertext's layout

    Raises:
        NoiseBudgetError: measured noise leaves no correctness margin
    """
    params = sk.params
    if c.params != params:
        raise ParameterError("Ciphertext and key use different parameters")
    q, p = params.q, params.p
    x = _phase(sk, c).astype(object)
    scaled = x * p
    residue = scaled % q
    half = q // 2
    magnitude = max(int(r if r <= half else q - r) for r in residue)
    if magnitude and math.log2(q) - math.log2(2 * magnitude) < MIN_MEASURED_BUDGET:
        raise NoiseBudgetError(
            f"Noise budget exhausted (estimate {c.noise_budget:.1f} bits); decryption refused"
        )
    m = ((scaled + half) // q % p).astype(np.uint64)
    return get_encoder(params).to_plain(m, c.layout)


def add(c1: Ciphertext, c2: Ciphertext) -> Ciphertext:
    _check_pair(c1, c2)
    q = c1.params.q
    return Ciphertext.build(
        c1.params,
        add_mod(c1.c0.coeffs, c2.c0.coeffs, q),
        add_mod(c1.c1.coeffs, c2.c1.coeffs, q),
        c1.layout,
        noise.add_bits(c1.params, c1.noise_bits, c2.noise_bits),
    )


def sub(c1: Ciphertext, c2: Ciphertext) -> Ciphertext:
    _check_pair(c1, c2)
    q = c1.params.q
    return Ciphertext.build(
        c1.params,
        sub_mod(c1.c0.coeffs, c2.c0.coeffs, q),
        sub_mod(c1.c1.coeffs, c2.c1.coeffs, q),
        c1.layout,
        noise.add_bits(c1.params, c1.noise_bits, c2.noise_bits),
    )


def add_plain(c: Ciphertext, v: PlainVector) -> Ciphertext:
    _check_plain(c, v)
    q = c.params.q
    c0 = add_mod(c.c0.coeffs, _scaled_message(c.params, v), q)
    return Ciphertext.build(
        c.params, c0, c.c1.coeffs, c.layout, noise.add_plain_bits(c.params, c.noise_bits)
    )


def sub_plain(c: Ciphertext, v: PlainVector) -> Ciphertext:
    _check_plain(c, v)
    q = c.params.q
    c0 = sub_mod(c.c0.coeffs, _scaled_message(c.params, v), q)
    return Ciphertext.build(
        c.params, c0, c.c1.coeffs, c.layout, noise.add_plain_bits(c.params, c.noise_bits)
    )


def mul_plain(c: Ciphertext, w: PlainVector) -> Ciphertext:
    """
    Product with a plaintext: slot-wise for slot layouts, a ring product for
    coefficient layouts. The plaintext is lifted with centered coefficients.
    """
    _check_plain(c, w)
    params = c.params
    q = params.q
    message = get_encoder(params).message(w)
    lifted = as_residues(centered(message, params.p), q)
    l1 = int(np.abs(centered(message, params.p)).sum())

    tables = q_tables(params)
    w_hat = forward_array(lifted, tables, ConvStyle.NEGACYCLIC)
    w_shoup = shoup_precompute(w_hat, q)
    parts = []
    for poly in (c.c0.coeffs, c.c1.coeffs):
        prod = mul_shoup(forward_array(poly, tables, ConvStyle.NEGACYCLIC), w_hat, w_shoup, q)
        parts.append(inverse_array(prod, tables, ConvStyle.NEGACYCLIC))
    return Ciphertext.build(
        params, parts[0], parts[1], c.layout, noise.plain_product_bits(params, c.noise_bits, l1)
    )


def _limbs(c: Ciphertext) -> np.ndarray:
    """(4, n) int64 rows: high and low 30-bit limbs of c0 and c1"""
    both = np.stack([c.c0.coeffs, c.c1.coeffs])
    hi = (both >> np.uint64(LIMB_BITS)).astype(np.int64)
    lo = (both & np.uint64(LIMB_MASK)).astype(np.int64)
    return np.concatenate([hi, lo])


def _shifted_stack(limbs: np.ndarray, exponents: Sequence[int]) -> np.ndarray:
    """Negacyclic shifts by each exponent: (K, 4n)"""
    n = limbs.shape[1]
    out = np.empty((len(exponents), limbs.shape[0], n), dtype=np.int64)
    for t, e in enumerate(exponents):
        rolled = np.roll(limbs, e, axis=1)
        rolled[:, :e] *= -1
        out[t] = rolled
    return out.reshape(len(exponents), -1)


def linear_combination_sparse(
    cts: Sequence[Ciphertext], weights: np.ndarray, exponents: Sequence[int]
) -> List[Ciphertext]:
    """
    out[o] = sum_c cts[c] * (sum_t weights[o, c, t] * x^exponents[t])

    The plaintext polynomials are sparse with small signed coefficients, so
    the products are accumulated exactly in int64 on 30-bit limbs of the
    ciphertext coefficients; only the final recombination reduces mod q.

    Args:
        cts: Input ciphertexts (same parameters and layout)
        weights: Integer array (C_out, C_in, K)
        exponents: K distinct monomial degrees below n

    Returns:
        C_out ciphertexts
    """
    if not cts:
        raise ParameterError("No ciphertexts to combine")
    weights = np.asarray(weights, dtype=np.int64)
    c_out, c_in, k = weights.shape
    if c_in != len(cts) or k != len(exponents):
        raise ParameterError(f"Weight shape {weights.shape} does not match inputs")
    params = cts[0].params
    for c in cts[1:]:
        _check_pair(cts[0], c)
    n, q = params.n, params.q
    if any(not 0 <= e < n for e in exponents):
        raise ParameterError("Monomial degree out of range")

    l1 = np.abs(weights).sum(axis=(1, 2))
    limb_bound = (q - 1) >> LIMB_BITS
    if int(l1.max(initial=0)) * max(limb_bound, LIMB_MASK) >= 1 << 62:
        raise ParameterError("Filter weights too large for exact limb accumulation")

    acc = np.zeros((c_out, 4 * n), dtype=np.int64)
    for ci, ct in enumerate(cts):
        acc += weights[:, ci, :] @ _shifted_stack(_limbs(ct), exponents)

    shift = 1 << LIMB_BITS
    max_noise = max(ct.noise_bits for ct in cts)
    results = []
    for o in range(c_out):
        rows = acc[o].reshape(4, n)
        hi = as_residues(rows[:2], q)
        lo = as_residues(rows[2:], q)
        combined = add_mod(scalar_mul_mod(hi, shift, q), lo, q)
        results.append(
            Ciphertext.build(
                params,
                combined[0],
                combined[1],
                cts[0].layout,
                noise.plain_product_bits(params, max_noise, int(l1[o])),
            )
        )
    return results


def mul_plain_sparse(c: Ciphertext, terms: Dict[int, int]) -> Ciphertext:
    """Product with the polynomial sum(coef * x^exp) given as {exp: coef}"""
    exponents = sorted(terms)
    weights = np.array([[[terms[e] for e in exponents]]], dtype=np.int64)
    return linear_combination_sparse([c], weights, exponents)[0]


def _apply_galois(c: Ciphertext, key: KeySwitchKey) -> Ciphertext:
    params = c.params
    q = params.q
    tables = q_tables(params)
    c0 = apply_automorphism(c.c0.coeffs, key.galois, q)
    c1 = apply_automorphism(c.c1.coeffs, key.galois, q)

    bits = np.uint64(params.decomp_base_bits)
    mask = np.uint64((1 << params.decomp_base_bits) - 1)
    acc0 = np.zeros(params.n, dtype=np.uint64)
    acc1 = np.zeros(params.n, dtype=np.uint64)
    for j in range(decomposition_digits(params)):
        digit = (c1 >> (bits * np.uint64(j))) & mask
        d_hat = forward_array(digit, tables, ConvStyle.NEGACYCLIC)
        acc0 = add_mod(acc0, key.k0[j].times_hat(d_hat, params), q)
        acc1 = add_mod(acc1, key.k1[j].times_hat(d_hat, params), q)

    new_c0 = add_mod(c0, inverse_array(acc0, tables, ConvStyle.NEGACYCLIC), q)
    new_c1 = inverse_array(acc1, tables, ConvStyle.NEGACYCLIC)
    return Ciphertext.build(
        params, new_c0, new_c1, c.layout, noise.rotate_bits(params, c.noise_bits)
    )


def rot(c: Ciphertext, k: int, keys: RotationKeySet) -> Ciphertext:
    """
    Left-rotate both slot rows by k

    Slot i of each row receives old slot (i + k) mod n/2.
    """
    if c.layout != Encoding.SLOTS:
        raise ParameterError("Rotation is defined on slot-encoded ciphertexts only")
    if k % c.params.row_size == 0:
        return c
    return _apply_galois(c, keys.get(k))


def row_swap(c: Ciphertext, keys: RotationKeySet) -> Ciphertext:
    if c.layout != Encoding.SLOTS:
        raise ParameterError("Row swap is defined on slot-encoded ciphertexts only")
    return _apply_galois(c, keys.get(ROW_SWAP))


def rerandomize(
    c: Ciphertext, pk: PublicKey, rng: np.random.Generator, flood_bits: int = 0
) -> Ciphertext:
    """Add a fresh public-key encryption of zero with optional uniform flooding noise"""
    params = c.params
    q = params.q
    z0, z1 = _public_zero(pk, rng)
    if flood_bits > 0:
        bound = 1 << flood_bits
        flood = rng.integers(-bound, bound + 1, size=params.n, dtype=np.int64)
        z0 = add_mod(z0, as_residues(flood, q), q)
    return Ciphertext.build(
        params,
        add_mod(c.c0.coeffs, z0, q),
        add_mod(c.c1.coeffs, z1, q),
        c.layout,
        noise.flood_bits(params, c.noise_bits, flood_bits),
    )


def negate(c: Ciphertext) -> Ciphertext:
    q = c.params.q
    return Ciphertext.build(
        c.params, neg_mod(c.c0.coeffs, q), neg_mod(c.c1.coeffs, q), c.layout, c.noise_bits
    )
