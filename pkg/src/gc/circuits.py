"""
Composite circuits over additively shared residues mod p

Share circuits take m shared operands of k bits each. Input order is fixed:
    garbler inputs:   s_A of operand 0, ..., s_A of operand m-1
    evaluator inputs: s_B of operand 0, ..., s_B of operand m-1 [, fresh mask]
All words are little-endian. A circuit with a fresh evaluator mask outputs
(result - mask) mod p, which becomes the garbler's new share while the mask
stays the evaluator's share.
"""

from enum import Enum
from functools import lru_cache
from typing import List, Sequence, Tuple

from src.gc.circuit import ONE, ZERO, BoolCircuit, CircuitBuilder
from src.utils.errors import CircuitError

Word = List[int]


class MaskRole(str, Enum):
    """Whether the circuit reshares its result under a fresh evaluator mask"""

    EVALUATOR = "evaluator"
    NONE = "none"


def bit_width(p: int) -> int:
    """Smallest k with p <= 2^k"""
    return max(1, (p - 1).bit_length())


def const_word(value: int, width: int) -> Word:
    return [ONE if (value >> i) & 1 else ZERO for i in range(width)]


def add_words(b: CircuitBuilder, x: Sequence[int], y: Sequence[int], carry: int = ZERO):
    """Ripple-carry sum, one AND per bit; returns (sum bits, carry out)"""
    out = []
    for xi, yi in zip(x, y):
        xc = b.xor(xi, carry)
        yc = b.xor(yi, carry)
        out.append(b.xor(xc, yi))
        carry = b.xor(carry, b.and_(xc, yc))
    return out, carry


def sub_words(b: CircuitBuilder, x: Sequence[int], y: Sequence[int]) -> Tuple[Word, int]:
    """x - y mod 2^len; second result is the borrow (1 iff x < y)"""
    diff, carry = add_words(b, x, [b.not_(w) for w in y], ONE)
    return diff, b.not_(carry)


def less_than(b: CircuitBuilder, x: Sequence[int], y: Sequence[int]) -> int:
    """Unsigned x < y, computing only the borrow chain"""
    carry = ONE
    for xi, yi in zip(x, y):
        nyi = b.not_(yi)
        xc = b.xor(xi, carry)
        yc = b.xor(nyi, carry)
        carry = b.xor(carry, b.and_(xc, yc))
    return b.not_(carry)


def geq_const(b: CircuitBuilder, x: Sequence[int], value: int) -> int:
    return b.not_(less_than(b, x, const_word(value, len(x))))


def mux_word(b: CircuitBuilder, sel: int, if0: Sequence[int], if1: Sequence[int]) -> Word:
    return [b.xor(x, b.and_(sel, b.xor(x, y))) for x, y in zip(if0, if1)]


def mod_add(b: CircuitBuilder, x: Sequence[int], y: Sequence[int], p: int) -> Word:
    """(x + y) mod p for x, y < p"""
    k = len(x)
    s, carry = add_words(b, x, y)
    ext = s + [carry]
    reduced, borrow = sub_words(b, ext, const_word(p, k + 1))
    return mux_word(b, borrow, reduced, ext)[:k]


def mod_sub(b: CircuitBuilder, x: Sequence[int], y: Sequence[int], p: int) -> Word:
    """(x - y) mod p for x, y < p"""
    diff, borrow = sub_words(b, x, y)
    wrapped, _ = add_words(b, diff, const_word(p, len(x)))
    return mux_word(b, borrow, diff, wrapped)


def _check_width(k: int, p: int) -> None:
    if p < 3:
        raise CircuitError(f"Modulus {p} too small")
    if (1 << k) < p:
        raise CircuitError(f"Bit width {k} cannot hold residues mod {p}")


def _shared_operands(b: CircuitBuilder, count: int, k: int, p: int) -> List[Word]:
    """Declare the shares of count operands and rebuild t_i = (s_A + s_B) mod p"""
    alice = [b.garbler_input(k) for _ in range(count)]
    bob = [b.evaluator_input(k) for _ in range(count)]
    return [mod_add(b, sa, sb, p) for sa, sb in zip(alice, bob)]


def _finish(b: CircuitBuilder, value: Word, p: int, mask_role: MaskRole) -> BoolCircuit:
    if mask_role == MaskRole.EVALUATOR:
        mask = b.evaluator_input(len(value))
        value = mod_sub(b, value, mask, p)
    b.output(value)
    return b.build()


def _offset(b: CircuitBuilder, t: Word, p: int) -> Word:
    """Order-preserving map of the signed value to v + (p-1)/2 in [0, p)"""
    return mod_add(b, t, const_word((p - 1) // 2, len(t)), p)


def build_identity(k: int) -> BoolCircuit:
    b = CircuitBuilder(f"identity-{k}")
    b.output(b.evaluator_input(k))
    return b.build()


def build_and() -> BoolCircuit:
    b = CircuitBuilder("and")
    (x,) = b.garbler_input(1)
    (y,) = b.evaluator_input(1)
    b.output([b.and_(x, y)])
    return b.build()


def build_adder(k: int) -> BoolCircuit:
    """Garbler word plus evaluator word mod 2^k"""
    b = CircuitBuilder(f"adder-{k}")
    x = b.garbler_input(k)
    y = b.evaluator_input(k)
    s, _ = add_words(b, x, y)
    b.output(s)
    return b.build()


@lru_cache(maxsize=64)
def build_relu_reshare(
    k: int, p: int, mask_role: MaskRole = MaskRole.EVALUATOR, shift: int = 0
) -> BoolCircuit:
    """
    ReLU of a shared residue with an optional fused right shift

    Output is floor(max(v, 0) / 2^shift) where v is the signed representative
    of (s_A + s_B) mod p, reshared under the evaluator's mask.
    """
    _check_width(k, p)
    if not 0 <= shift < k:
        raise CircuitError(f"Shift {shift} out of range for width {k}")
    b = CircuitBuilder(f"relu-{k}-{p}-{shift}-{mask_role.value}")
    (t,) = _shared_operands(b, 1, k, p)
    positive = b.not_(geq_const(b, t, (p + 1) // 2))
    shifted = t[shift:] + [ZERO] * shift
    return _finish(b, [b.and_(positive, w) for w in shifted], p, mask_role)


@lru_cache(maxsize=64)
def build_maxpool(
    window: int, k: int, p: int, mask_role: MaskRole = MaskRole.EVALUATOR
) -> BoolCircuit:
    """Signed maximum of window shared residues"""
    _check_width(k, p)
    if window < 2:
        raise CircuitError(f"Max-pool window must be at least 2, got {window}")
    b = CircuitBuilder(f"maxpool-{window}-{k}-{p}-{mask_role.value}")
    values = [_offset(b, t, p) for t in _shared_operands(b, window, k, p)]
    best = values[0]
    for candidate in values[1:]:
        best = mux_word(b, less_than(b, best, candidate), best, candidate)
    result = mod_sub(b, best, const_word((p - 1) // 2, k), p)
    return _finish(b, result, p, mask_role)


@lru_cache(maxsize=64)
def build_argmax(labels: int, k: int, p: int) -> BoolCircuit:
    """
    Index of the signed maximum across labels shared residues

    Ties resolve to the lowest index. The output is the plain index in
    max(1, ceil(lg labels)) bits, decodable by the garbler only.
    """
    _check_width(k, p)
    if labels < 2:
        raise CircuitError(f"Argmax needs at least 2 labels, got {labels}")
    width = max(1, (labels - 1).bit_length())
    b = CircuitBuilder(f"argmax-{labels}-{k}-{p}")
    values = [_offset(b, t, p) for t in _shared_operands(b, labels, k, p)]
    best = values[0]
    index = const_word(0, width)
    for i, candidate in enumerate(values[1:], start=1):
        greater = less_than(b, best, candidate)
        best = mux_word(b, greater, best, candidate)
        index = mux_word(b, greater, index, const_word(i, width))
    b.output(index)
    return b.build()


@lru_cache(maxsize=64)
def build_truncation(
    k: int, p: int, shift: int, mask_role: MaskRole = MaskRole.EVALUATOR
) -> BoolCircuit:
    """
    Exact floor(v / 2^shift) of a shared signed residue

    The residue is converted to (k+1)-bit two's complement, arithmetically
    shifted, then mapped back mod p.
    """
    _check_width(k, p)
    if not 0 < shift <= k:
        raise CircuitError(f"Shift {shift} out of range for width {k}")
    b = CircuitBuilder(f"trunc-{k}-{p}-{shift}-{mask_role.value}")
    (t,) = _shared_operands(b, 1, k, p)
    negative = geq_const(b, t, (p + 1) // 2)

    def scaled_constant(value: int) -> Word:
        return [negative if w == ONE else ZERO for w in const_word(value, k + 1)]

    twos, _ = add_words(b, t + [ZERO], scaled_constant((1 << (k + 1)) - p))
    sign = twos[k]
    shifted = twos[shift:] + [sign] * shift
    result, _ = add_words(b, shifted, scaled_constant(p))
    return _finish(b, result[:k], p, mask_role)
