"""
Right-shifting shared values

Probabilistic mode uses a dealer pair (r, r >> f) with r uniform in
[0, p - 2B). For |v| < B the opened value c = v + B + r never wraps mod p,
and
    floor(c / 2^f) - (r >> f) - B / 2^f  =  floor(v / 2^f) + carry,
where carry in {0, 1} is the carry out of the low f bits of v + r.

Exact mode evaluates a truncation circuit and costs one garbled circuit
per element.
"""

import math
from typing import TYPE_CHECKING

import numpy as np

from src.gc.circuits import MaskRole, bit_width, build_truncation
from src.gc.protocol import run_share_circuit
from src.mpc.dealer import TruncPair
from src.mpc.sharing import Party, ShareVector
from src.ring.modarith import add_mod, as_residues, sub_mod
from src.utils.errors import ShareMismatchError
from src.utils.settings import TruncationMode

if TYPE_CHECKING:
    from src.runtime.session import Session

DEFAULT_MARGIN = 2


def truncation_bound(p: int, shift: int, margin: int = DEFAULT_MARGIN) -> int:
    """Magnitude bound B = 2^(floor(lg p) - 1 - margin); a multiple of 2^shift"""
    exponent = int(math.floor(math.log2(p))) - 1 - margin
    if exponent < shift:
        raise ShareMismatchError(f"Modulus {p} leaves no room to truncate {shift} bits")
    return 1 << exponent


def truncate_probabilistic(session: "Session", v: ShareVector, pair: TruncPair) -> ShareVector:
    """One party's share of floor(v / 2^f) + {0, 1}"""
    if len(pair) != len(v) or pair.modulus != v.modulus:
        raise ShareMismatchError("Truncation pair does not match the shares")
    session.tape.consume(pair.tag)
    p = v.modulus
    masked = add_mod(v.values, pair.r, p)
    if session.party is Party.ALICE:
        masked = add_mod(masked, as_residues(np.full(len(v), pair.bound), p), p)
    c = add_mod(masked, session.open_shares(masked), p)

    if session.party is Party.ALICE:
        high = c >> np.uint64(pair.shift)
        offset = as_residues(np.full(len(v), pair.bound >> pair.shift), p)
        out = sub_mod(sub_mod(high, pair.r_high, p), offset, p)
    else:
        out = sub_mod(np.zeros(len(v), dtype=np.uint64), pair.r_high, p)
    return v.with_values(out)


def truncate_exact(session: "Session", v: ShareVector, shift: int) -> ShareVector:
    """One party's share of exactly floor(v / 2^shift), via a garbled circuit"""
    p = v.modulus
    k = bit_width(p)
    circuit = build_truncation(k, p, shift, MaskRole.EVALUATOR)
    out = run_share_circuit(session, circuit, [v.values], k, MaskRole.EVALUATOR)
    return v.with_values(out)


def truncate_shares(
    session: "Session",
    v: ShareVector,
    shift: int,
    mode: TruncationMode,
    margin: int = DEFAULT_MARGIN,
) -> ShareVector:
    """
    Rescale shares by 2^-shift

    Args:
        session: The party's session
        v: This party's shares
        shift: Bits to drop; 0 returns v unchanged
        mode: EXACT (garbled circuit) or PROBABILISTIC (dealer pair, error in {0, +1})
        margin: Headroom bits for the probabilistic bound

    Returns:
        This party's share of the rescaled value
    """
    if shift <= 0:
        return v
    if mode == TruncationMode.EXACT:
        return truncate_exact(session, v, shift)
    bound = truncation_bound(v.modulus, shift, margin)
    pair = session.tape.trunc_pairs(len(v), shift, bound)
    return truncate_probabilistic(session, v, pair)
