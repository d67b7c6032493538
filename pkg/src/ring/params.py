"""
Ring parameters: degree n, ciphertext modulus q, plaintext modulus p
"""

import hashlib
from enum import Enum
from functools import lru_cache
from typing import Optional

from pydantic import BaseModel, ConfigDict, Field, model_validator

from src.ring.primes import find_ntt_prime, find_psi, has_root_of_order, is_prime
from src.utils.errors import ParameterError

# q must exceed p by at least this many bits
NOISE_HEADROOM_BITS = 10
MAX_MODULUS_BITS = 62


class ModulusId(str, Enum):
    """Which of the two moduli a polynomial lives under"""

    Q = "q"
    P = "p"


class RingParams(BaseModel):
    """
    Validated parameter set shared by both parties

    q is searched congruent to 1 mod 2n*p, so q mod p = 1 and plaintext
    wraparound adds the least possible noise in a plaintext product.
    """

    model_config = ConfigDict(
        frozen=True,
        json_schema_extra={"example": {"n": 2048, "decomp_base_bits": 15}},
    )

    n: int = Field(..., ge=4, description="Polynomial degree and slot count")
    q: int = Field(..., description="Ciphertext modulus (prime, below 2^62)")
    p: int = Field(..., description="Plaintext modulus (prime)")
    psi_q: int = Field(..., description="Primitive 2n-th root of unity mod q")
    psi_p: int = Field(..., description="Primitive 2n-th root of unity mod p")
    decomp_base_bits: int = Field(default=15, ge=1, le=31, description="Key-switching digit width")

    @model_validator(mode="after")
    def check_parameters(self) -> "RingParams":
        n = self.n
        if n & (n - 1):
            raise ValueError(f"n must be a power of two, got {n}")
        for name, modulus, psi in (("q", self.q, self.psi_q), ("p", self.p, self.psi_p)):
            if modulus.bit_length() > MAX_MODULUS_BITS:
                raise ValueError(f"{name} exceeds {MAX_MODULUS_BITS} bits")
            if not is_prime(modulus):
                raise ValueError(f"{name} = {modulus} is not prime")
            if (modulus - 1) % (2 * n):
                raise ValueError(f"{name} = {modulus} is not 1 mod 2n")
            if not has_root_of_order(modulus, 2 * n, psi):
                raise ValueError(f"psi_{name} is not a primitive 2n-th root of unity")
        if self.p << NOISE_HEADROOM_BITS >= self.q:
            raise ValueError("p leaves no noise headroom below q")
        return self

    @classmethod
    def generate(
        cls,
        n: int = 2048,
        p_bits: int = 20,
        q_bits: int = 60,
        p: Optional[int] = None,
        decomp_base_bits: int = 15,
    ) -> "RingParams":
        """
        Deterministic parameter search

        Args:
            n: Degree (power of two)
            p_bits: Plaintext modulus width, ignored when p is given
            q_bits: Ciphertext modulus width
            p: Explicit plaintext prime
            decomp_base_bits: Key-switching digit width

        Returns:
            Validated parameters
        """
        return _generate(n, p_bits, q_bits, p, decomp_base_bits)

    @classmethod
    def default(cls) -> "RingParams":
        """n = 2048, 60-bit q, 20-bit p"""
        return _generate(2048, 20, 60, None, 15)

    def modulus(self, which: ModulusId) -> int:
        return self.q if which == ModulusId.Q else self.p

    def psi(self, which: ModulusId) -> int:
        return self.psi_q if which == ModulusId.Q else self.psi_p

    @property
    def delta(self) -> int:
        """Plaintext scaling factor floor(q / p)"""
        return self.q // self.p

    @property
    def row_size(self) -> int:
        """Slots per batching row"""
        return self.n // 2

    @property
    def plain_bits(self) -> int:
        """k = ceil(lg p)"""
        return (self.p - 1).bit_length()

    def fingerprint(self) -> str:
        """Stable hash used in the session handshake"""
        return hashlib.sha256(self.model_dump_json().encode()).hexdigest()


@lru_cache(maxsize=16)
def _generate(
    n: int, p_bits: int, q_bits: int, p: Optional[int], decomp_base_bits: int
) -> RingParams:
    if p is None:
        p = find_ntt_prime(p_bits, 2 * n)
    elif not is_prime(p) or (p - 1) % (2 * n):
        raise ParameterError(f"p = {p} is not a prime congruent to 1 mod {2 * n}")
    q = find_ntt_prime(q_bits, 2 * n * p)
    return RingParams(
        n=n,
        q=q,
        p=p,
        psi_q=find_psi(q, n),
        psi_p=find_psi(p, n),
        decomp_base_bits=decomp_base_bits,
    )
