"""
Secret-shared element-wise products from Beaver triples

Each party opens d_i = x_i - a_i and e_i = y_i - b_i; with d and e public
    g_i = c_i + d*b_i + e*a_i   (+ d*e for Alice only)
reconstructs to x*y. d and e are the only values that cross the wire.
"""

from typing import TYPE_CHECKING, Tuple

import numpy as np

from src.mpc.dealer import BeaverTriple
from src.mpc.sharing import Party, ShareVector
from src.ring.modarith import add_mod, mul_mod, sub_mod
from src.utils.errors import ShareMismatchError

if TYPE_CHECKING:
    from src.runtime.session import Session


def _check(x: ShareVector, y: ShareVector, triple: BeaverTriple) -> None:
    if x.modulus != y.modulus or x.modulus != triple.modulus:
        raise ShareMismatchError("Operands and triple use different moduli")
    if not len(x) == len(y) == len(triple):
        raise ShareMismatchError(
            f"Length mismatch: x={len(x)}, y={len(y)}, triple={len(triple)}"
        )


def beaver_open(
    x: ShareVector, y: ShareVector, triple: BeaverTriple
) -> Tuple[np.ndarray, np.ndarray]:
    """This party's halves of the openings d and e"""
    _check(x, y, triple)
    m = x.modulus
    return sub_mod(x.values, triple.a, m), sub_mod(y.values, triple.b, m)


def beaver_combine(
    party: Party, triple: BeaverTriple, d: np.ndarray, e: np.ndarray
) -> np.ndarray:
    m = triple.modulus
    g = add_mod(triple.c, mul_mod(d, triple.b, m), m)
    g = add_mod(g, mul_mod(e, triple.a, m), m)
    if party is Party.ALICE:
        g = add_mod(g, mul_mod(d, e, m), m)
    return g


def beaver_hadamard(
    session: "Session", x: ShareVector, y: ShareVector, triple: BeaverTriple
) -> ShareVector:
    """
    One party's share of x * y

    Args:
        session: The party's running session (opening exchange, tape)
        x, y: This party's shares of the operands
        triple: An unconsumed triple of matching length

    Raises:
        CorrelationReuseError: triple already consumed
    """
    _check(x, y, triple)
    session.tape.consume(triple.tag)
    m = x.modulus
    n = len(x)
    d_own, e_own = beaver_open(x, y, triple)
    peer = session.open_shares(np.concatenate([d_own, e_own]))
    d = add_mod(d_own, peer[:n], m)
    e = add_mod(e_own, peer[n:], m)
    return x.with_values(beaver_combine(session.party, triple, d, e))


def second_sharing(v: ShareVector, triple: BeaverTriple) -> ShareVector:
    """Re-mask v with the triple's zero-sharing; reconstructs to the same value"""
    return v.with_values(add_mod(v.values, triple.z, v.modulus))


def square_activation(session: "Session", v: ShareVector, triple: BeaverTriple) -> ShareVector:
    """Share of v * v, with the second operand independently re-masked"""
    return beaver_hadamard(session, v, second_sharing(v, triple), triple)
