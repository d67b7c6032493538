"""
Key material: ternary secret key, public key and rotation (Galois) keys
"""

import math
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Optional, Tuple, Union

import numpy as np

from src.pahe.encoding import galois_element, row_swap_element
from src.pahe.noise import ERROR_ETA
from src.ring.modarith import add_mod, as_residues, mul_shoup, neg_mod, shoup_precompute
from src.ring.ntt import ConvStyle, NttTables, forward_array, get_tables, inverse_array
from src.ring.params import RingParams
from src.utils.errors import MissingRotationKeyError
from src.utils.logger import get_logger

logger = get_logger(__name__)

ROW_SWAP = "row_swap"


def q_tables(params: RingParams) -> NttTables:
    return get_tables(params.n, params.q, params.psi_q)


def sample_ternary(rng: np.random.Generator, n: int) -> np.ndarray:
    return rng.integers(-1, 2, size=n, dtype=np.int64)


def sample_error(rng: np.random.Generator, n: int) -> np.ndarray:
    return rng.binomial(2 * ERROR_ETA, 0.5, size=n).astype(np.int64) - ERROR_ETA


def sample_uniform(rng: np.random.Generator, n: int, modulus: int) -> np.ndarray:
    return rng.integers(0, modulus, size=n, dtype=np.uint64)


@dataclass(frozen=True)
class FixedOperand:
    """A polynomial kept in negacyclic evaluation form with Shoup constants"""

    hat: np.ndarray
    hat_shoup: np.ndarray

    @classmethod
    def from_coeffs(cls, coeffs: np.ndarray, params: RingParams) -> "FixedOperand":
        hat = forward_array(coeffs, q_tables(params), ConvStyle.NEGACYCLIC)
        return cls(hat, shoup_precompute(hat, params.q))

    def times_hat(self, x_hat: np.ndarray, params: RingParams) -> np.ndarray:
        return mul_shoup(x_hat, self.hat, self.hat_shoup, params.q)

    def times(self, x: np.ndarray, params: RingParams) -> np.ndarray:
        """Ring product with a coefficient-form operand, result in coefficient form"""
        tables = q_tables(params)
        prod = self.times_hat(forward_array(x, tables, ConvStyle.NEGACYCLIC), params)
        return inverse_array(prod, tables, ConvStyle.NEGACYCLIC)


@dataclass(frozen=True)
class PublicKey:
    """(b, a) with b = -(a*s + e)"""

    params: RingParams
    b: np.ndarray
    a: np.ndarray
    b_op: FixedOperand = field(repr=False)
    a_op: FixedOperand = field(repr=False)

    @classmethod
    def create(cls, params: RingParams, b: np.ndarray, a: np.ndarray) -> "PublicKey":
        return cls(
            params, b, a, FixedOperand.from_coeffs(b, params), FixedOperand.from_coeffs(a, params)
        )


@dataclass(frozen=True)
class SecretKey:
    """Ternary secret s stored as residues mod q"""

    params: RingParams
    s: np.ndarray
    s_op: FixedOperand = field(repr=False)
    public: PublicKey = field(repr=False)


@dataclass(frozen=True)
class KeySwitchKey:
    """Digit-decomposed encryptions of s(x^g) under s"""

    galois: int
    k0: List[FixedOperand]
    k1: List[FixedOperand]
    raw0: List[np.ndarray] = field(repr=False)
    raw1: List[np.ndarray] = field(repr=False)


@dataclass(frozen=True)
class RotationKeySet:
    """Key-switching keys indexed by row-rotation step (and optionally the row swap)"""

    params: RingParams
    keys: Dict[Union[int, str], KeySwitchKey]

    @property
    def steps(self) -> List[Union[int, str]]:
        return sorted(self.keys, key=str)

    def get(self, step: Union[int, str]) -> KeySwitchKey:
        if step != ROW_SWAP:
            step = int(step) % self.params.row_size
        try:
            return self.keys[step]
        except KeyError:
            raise MissingRotationKeyError(f"No rotation key for step {step}") from None


def automorphism_map(n: int, galois: int) -> Tuple[np.ndarray, np.ndarray]:
    """Destination index and sign flag for x^i -> x^(i*g)"""
    idx = (np.arange(n, dtype=np.int64) * galois) % (2 * n)
    negate = idx >= n
    return np.where(negate, idx - n, idx), negate


def apply_automorphism(coeffs: np.ndarray, galois: int, modulus: int) -> np.ndarray:
    dest, negate = automorphism_map(coeffs.shape[0], galois)
    out = np.zeros_like(coeffs)
    out[dest] = np.where(negate, neg_mod(coeffs, modulus), coeffs)
    return out


def decomposition_digits(params: RingParams) -> int:
    return math.ceil(params.q.bit_length() / params.decomp_base_bits)


def _keyswitch_key(
    params: RingParams, s: np.ndarray, s_op: FixedOperand, galois: int, rng: np.random.Generator
) -> KeySwitchKey:
    q = params.q
    target = apply_automorphism(s, galois, q)
    k0, k1, raw0, raw1 = [], [], [], []
    for j in range(decomposition_digits(params)):
        a = sample_uniform(rng, params.n, q)
        e = as_residues(sample_error(rng, params.n), q)
        scale = pow(2, j * params.decomp_base_bits, q)
        scaled = as_residues(target.astype(object) * scale, q)
        b = add_mod(add_mod(neg_mod(s_op.times(a, params), q), e, q), scaled, q)
        raw0.append(b)
        raw1.append(a)
        k0.append(FixedOperand.from_coeffs(b, params))
        k1.append(FixedOperand.from_coeffs(a, params))
    return KeySwitchKey(galois, k0, k1, raw0, raw1)


def keygen(
    params: RingParams,
    rotation_steps: Iterable[int] = (),
    seed: Optional[int] = None,
    row_swap: bool = False,
) -> Tuple[SecretKey, RotationKeySet]:
    """
    Generate Alice's key material

    Args:
        params: Ring parameters
        rotation_steps: Row-rotation offsets to support (taken mod n/2; 0 needs no key)
        seed: Seed for deterministic key generation
        row_swap: Also generate the row-swap key

    Returns:
        Secret key (carrying its public key) and the rotation key set
    """
    rng = np.random.default_rng(seed)
    n, q = params.n, params.q

    s = as_residues(sample_ternary(rng, n), q)
    s_op = FixedOperand.from_coeffs(s, params)
    a = sample_uniform(rng, n, q)
    e = as_residues(sample_error(rng, n), q)
    b = neg_mod(add_mod(s_op.times(a, params), e, q), q)
    sk = SecretKey(params, s, s_op, PublicKey.create(params, b, a))

    keys: Dict[Union[int, str], KeySwitchKey] = {}
    for step in sorted({int(k) % params.row_size for k in rotation_steps} - {0}):
        keys[step] = _keyswitch_key(params, s, s_op, galois_element(step, n), rng)
    if row_swap:
        keys[ROW_SWAP] = _keyswitch_key(params, s, s_op, row_swap_element(n), rng)

    logger.info(f"Generated keys for n={n} with {len(keys)} key-switching keys")
    return sk, RotationKeySet(params, keys)


