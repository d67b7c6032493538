"""
Non-linear layers on shares: garbled ReLU and Beaver squaring
"""

from enum import Enum
from typing import TYPE_CHECKING

from src.gc.circuits import MaskRole, bit_width, build_relu_reshare
from src.gc.protocol import run_share_circuit
from src.mpc.beaver import square_activation
from src.mpc.sharing import ShareVector
from src.mpc.truncation import DEFAULT_MARGIN, truncate_shares
from src.runtime.timing import Primitive
from src.utils.errors import CircuitError
from src.utils.settings import TruncationMode

if TYPE_CHECKING:
    from src.runtime.session import Session


class ActivationKind(str, Enum):
    RELU = "relu"
    SQUARE = "square"


def relu(session: "Session", v: ShareVector, shift: int = 0) -> ShareVector:
    """Share of floor(max(v, 0) / 2^shift), computed exactly in one garbled circuit"""
    p = v.modulus
    k = bit_width(p)
    if shift >= k:
        raise CircuitError(f"Shift {shift} exceeds the {k}-bit share width")
    circuit = build_relu_reshare(k, p, MaskRole.EVALUATOR, shift)
    with session.primitive(Primitive.RELU_GC, len(v)):
        out = run_share_circuit(session, circuit, [v.values], k, MaskRole.EVALUATOR)
    return v.with_values(out)


def rescale(
    session: "Session",
    v: ShareVector,
    shift: int,
    mode: TruncationMode,
    margin: int = DEFAULT_MARGIN,
) -> ShareVector:
    """Share of floor(v / 2^shift) per the truncation mode"""
    if shift <= 0:
        return v
    with session.primitive(Primitive.TRUNCATION, len(v)):
        return truncate_shares(session, v, shift, mode, margin)


def square(
    session: "Session",
    v: ShareVector,
    pre_shift: int,
    post_shift: int,
    mode: TruncationMode,
    margin: int = DEFAULT_MARGIN,
) -> ShareVector:
    """Share of floor(floor(v / 2^pre)^2 / 2^post)"""
    v = rescale(session, v, pre_shift, mode, margin)
    with session.primitive(Primitive.SQUARE_MT, len(v)):
        triple = session.tape.triples(len(v))
        out = square_activation(session, v, triple)
    return rescale(session, out, post_shift, mode, margin)


def activation(
    session: "Session",
    v: ShareVector,
    kind: ActivationKind,
    shift: int,
    mode: TruncationMode,
    pre_shift: int = 0,
    margin: int = DEFAULT_MARGIN,
) -> ShareVector:
    """
    Activation followed by requantization

    A pending pre_shift (the producing conv's rescale) is fused into the
    ReLU circuit; squaring rescales before and after the product.
    """
    if kind == ActivationKind.RELU:
        return relu(session, v, pre_shift + shift)
    return square(session, v, pre_shift, shift, mode, margin)
