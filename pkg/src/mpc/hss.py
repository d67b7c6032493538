"""
Homomorphic secret sharing: turning a ciphertext into additive shares
"""

from typing import Tuple, Union

import numpy as np

from src.pahe.encoding import PlainVector
from src.pahe.keys import PublicKey
from src.pahe.scheme import Ciphertext, add_plain, rerandomize, sub_plain
from src.ring.modarith import add_mod
from src.utils.errors import ShareMismatchError


def hss_share(c: Ciphertext, s_b: PlainVector) -> Ciphertext:
    """Encryption of Alice's share (x - s_B) mod p"""
    return sub_plain(c, s_b)


def hss_rec(
    share_a: Union[Ciphertext, PlainVector], s_b: PlainVector, p: int = 0
) -> Union[Ciphertext, PlainVector]:
    """
    Recombine with Bob's share, homomorphically or on a decrypted share

    p is needed only for the plaintext case.
    """
    if isinstance(share_a, Ciphertext):
        return add_plain(share_a, s_b)
    if share_a.encoding != s_b.encoding or len(share_a) != len(s_b):
        raise ShareMismatchError("Plain shares differ in encoding or length")
    if p <= 0:
        raise ShareMismatchError("Plaintext recombination needs the modulus")
    return PlainVector(add_mod(share_a.slots, s_b.slots, p), share_a.encoding)


def mask_ciphertext(
    c: Ciphertext, pk: PublicKey, rng: np.random.Generator, flood_bits: int
) -> Tuple[Ciphertext, PlainVector]:
    """
    Bob's side of HSS before returning a ciphertext to Alice

    Every one of the n entries gets a uniform mask, then the result is
    re-randomized with a public-key encryption of zero and flooding noise.

    Returns:
        (ciphertext for Alice, Bob's mask)
    """
    params = c.params
    mask = PlainVector(
        rng.integers(0, params.p, size=params.n, dtype=np.uint64), c.layout
    )
    return rerandomize(hss_share(c, mask), pk, rng, flood_bits), mask
