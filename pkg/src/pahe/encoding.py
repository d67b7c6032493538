"""
Plaintext vectors and the batching encoder

Slots form a 2 x (n/2) grid. Slot (r, i) is the evaluation of the message
polynomial at psi^(3^i) for row 0 and psi^(-3^i) for row 1, so the
automorphism x -> x^(3^k) rotates both rows left by k and x -> x^(-1)
swaps the rows.
"""

from dataclasses import dataclass
from enum import Enum
from functools import lru_cache
from typing import Sequence, Union

import numpy as np

from src.ring.modarith import as_residues, centered
from src.ring.ntt import ConvStyle, forward_array, get_tables, inverse_array
from src.ring.params import RingParams
from src.utils.errors import ParameterError


class Encoding(str, Enum):
    """How a plaintext vector maps onto the message polynomial"""

    SLOTS = "slots"
    COEFFICIENTS = "coefficients"


@dataclass(frozen=True)
class PlainVector:
    """n residues mod p and the encoding they are meant for"""

    slots: np.ndarray
    encoding: Encoding = Encoding.SLOTS

    def __post_init__(self) -> None:
        if self.slots.dtype != np.uint64 or self.slots.ndim != 1:
            raise ParameterError("PlainVector slots must be a flat uint64 array")

    @classmethod
    def from_ints(
        cls,
        values: Union[Sequence[int], np.ndarray],
        params: RingParams,
        encoding: Encoding = Encoding.SLOTS,
    ) -> "PlainVector":
        """Reduce integers mod p, zero-padding up to n entries"""
        arr = np.asarray(values)
        if arr.ndim != 1 or arr.shape[0] > params.n:
            raise ParameterError(f"Plain vector must hold at most {params.n} values")
        padded = np.zeros(params.n, dtype=arr.dtype if arr.size else np.int64)
        padded[: arr.shape[0]] = arr
        return cls(as_residues(padded, params.p), encoding)

    @classmethod
    def zeros(cls, params: RingParams, encoding: Encoding = Encoding.SLOTS) -> "PlainVector":
        return cls(np.zeros(params.n, dtype=np.uint64), encoding)

    def signed(self, p: int) -> np.ndarray:
        return centered(self.slots, p)

    def __len__(self) -> int:
        return int(self.slots.shape[0])


@lru_cache(maxsize=16)
def slot_permutation(n: int) -> np.ndarray:
    """Negacyclic NTT index holding each slot"""
    two_n = 2 * n
    half = n // 2
    perm = np.zeros(n, dtype=np.int64)
    e = 1
    for i in range(half):
        perm[i] = (e - 1) // 2
        perm[half + i] = (two_n - e - 1) // 2
        e = e * 3 % two_n
    return perm


def galois_element(step: int, n: int) -> int:
    """x -> x^g realizing a left rotation by step within each row"""
    return pow(3, step % (n // 2), 2 * n)


def row_swap_element(n: int) -> int:
    return 2 * n - 1


class BatchEncoder:
    """Maps slot vectors to coefficient polynomials mod p and back"""

    def __init__(self, params: RingParams):
        self.params = params
        self.tables = get_tables(params.n, params.p, params.psi_p)
        self.perm = slot_permutation(params.n)

    def encode(self, slots: np.ndarray) -> np.ndarray:
        """Slot values to message coefficients (an inverse negacyclic NTT)"""
        evals = np.zeros(self.params.n, dtype=np.uint64)
        evals[self.perm] = slots
        return inverse_array(evals, self.tables, ConvStyle.NEGACYCLIC)

    def decode(self, coeffs: np.ndarray) -> np.ndarray:
        return forward_array(coeffs, self.tables, ConvStyle.NEGACYCLIC)[self.perm]

    def message(self, v: PlainVector) -> np.ndarray:
        """Coefficients of the message polynomial carried by v"""
        if len(v) != self.params.n:
            raise ParameterError(f"Plain vector has {len(v)} slots, expected {self.params.n}")
        if v.encoding == Encoding.COEFFICIENTS:
            return v.slots
        return self.encode(v.slots)

    def to_plain(self, coeffs: np.ndarray, encoding: Encoding) -> PlainVector:
        if encoding == Encoding.COEFFICIENTS:
            return PlainVector(coeffs.astype(np.uint64), Encoding.COEFFICIENTS)
        return PlainVector(self.decode(coeffs), Encoding.SLOTS)

    def l1_norm(self, v: PlainVector) -> int:
        """Sum of |centered coefficients| of the message polynomial"""
        return int(np.abs(centered(self.message(v), self.params.p)).sum())


@lru_cache(maxsize=16)
def get_encoder(params: RingParams) -> BatchEncoder:
    return BatchEncoder(params)
