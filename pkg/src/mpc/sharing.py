"""
Additive secret sharing over the plaintext modulus
"""

from dataclasses import dataclass, replace
from enum import Enum
from typing import TYPE_CHECKING, Optional, Sequence, Tuple, Union

import numpy as np

from src.ring.modarith import add_mod, as_residues, centered, neg_mod, sub_mod
from src.utils.errors import ShareMismatchError

if TYPE_CHECKING:
    from src.protocols.layout import TensorLayout


class Party(str, Enum):
    """The two protocol roles"""

    ALICE = "alice"  # client: owns the image and the secret key, garbles
    BOB = "bob"  # server: owns the weights, evaluates

    @property
    def peer(self) -> "Party":
        return Party.BOB if self is Party.ALICE else Party.ALICE


@dataclass(frozen=True)
class ShareVector:
    """One party's additive share of an integer tensor"""

    values: np.ndarray
    modulus: int
    owner: Party
    layout: Optional["TensorLayout"] = None

    def __post_init__(self) -> None:
        if self.values.dtype != np.uint64 or self.values.ndim != 1:
            raise ShareMismatchError("Share values must be a flat uint64 array")

    @classmethod
    def from_ints(
        cls,
        values: Union[Sequence[int], np.ndarray],
        modulus: int,
        owner: Party,
        layout: Optional["TensorLayout"] = None,
    ) -> "ShareVector":
        return cls(as_residues(np.asarray(values).reshape(-1), modulus), modulus, owner, layout)

    @classmethod
    def zeros(
        cls, length: int, modulus: int, owner: Party, layout: Optional["TensorLayout"] = None
    ) -> "ShareVector":
        return cls(np.zeros(length, dtype=np.uint64), modulus, owner, layout)

    def signed(self) -> np.ndarray:
        return centered(self.values, self.modulus)

    def with_values(
        self, values: np.ndarray, layout: Optional["TensorLayout"] = None
    ) -> "ShareVector":
        return replace(self, values=values.astype(np.uint64), layout=layout or self.layout)

    def __len__(self) -> int:
        return int(self.values.shape[0])


def _check(a: ShareVector, b: ShareVector) -> None:
    if a.modulus != b.modulus:
        raise ShareMismatchError(f"Share moduli differ: {a.modulus} vs {b.modulus}")
    if len(a) != len(b):
        raise ShareMismatchError(f"Share lengths differ: {len(a)} vs {len(b)}")


def share(
    x: Union[Sequence[int], np.ndarray], s_other: ShareVector, owner: Optional[Party] = None
) -> ShareVector:
    """
    Complete a sharing of x given the other party's share: s = (x - s_other) mod m

    Args:
        x: Secret integers (any sign; reduced mod the share modulus)
        s_other: The other party's share
        owner: Owner of the returned share (defaults to the peer of s_other's owner)
    """
    m = s_other.modulus
    xr = as_residues(np.asarray(x).reshape(-1), m)
    if xr.shape[0] != len(s_other):
        raise ShareMismatchError(f"Secret has {xr.shape[0]} values, share has {len(s_other)}")
    return ShareVector(
        sub_mod(xr, s_other.values, m), m, owner or s_other.owner.peer, s_other.layout
    )


def rec(a: ShareVector, b: ShareVector) -> np.ndarray:
    """Reconstruct residues (a + b) mod m"""
    _check(a, b)
    return add_mod(a.values, b.values, a.modulus)


def rec_signed(a: ShareVector, b: ShareVector) -> np.ndarray:
    return centered(rec(a, b), a.modulus)


def split(
    x: Union[Sequence[int], np.ndarray], modulus: int, rng: np.random.Generator
) -> Tuple[ShareVector, ShareVector]:
    """Fresh uniform sharing (Alice's share, Bob's share) of x"""
    xr = as_residues(np.asarray(x).reshape(-1), modulus)
    bob = ShareVector(
        rng.integers(0, modulus, size=xr.shape[0], dtype=np.uint64), modulus, Party.BOB
    )
    return share(xr, bob, Party.ALICE), bob


def add_shares(a: ShareVector, b: ShareVector) -> ShareVector:
    _check(a, b)
    return a.with_values(add_mod(a.values, b.values, a.modulus))


def sub_shares(a: ShareVector, b: ShareVector) -> ShareVector:
    _check(a, b)
    return a.with_values(sub_mod(a.values, b.values, a.modulus))


def neg_share(a: ShareVector) -> ShareVector:
    return a.with_values(neg_mod(a.values, a.modulus))


def add_public(a: ShareVector, c: Union[int, np.ndarray]) -> ShareVector:
    """Add a public constant; only Alice's share moves"""
    if a.owner is Party.BOB:
        return a
    const = np.broadcast_to(as_residues(np.asarray(c), a.modulus), a.values.shape)
    return a.with_values(add_mod(a.values, const, a.modulus))
