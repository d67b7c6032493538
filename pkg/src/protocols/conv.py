"""
Homomorphic convolution on shared tensors

Alice encrypts her share tile by tile, Bob adds his share, multiplies by his
filter polynomials, accumulates input channels per group, masks every
result and sends it back. Alice's decryption and Bob's masks are fresh
shares of the convolution.
"""

from dataclasses import dataclass
from typing import TYPE_CHECKING, List, Optional, Sequence

import numpy as np

from src.mpc.hss import mask_ciphertext
from src.mpc.sharing import Party, ShareVector
from src.pahe.encoding import Encoding, PlainVector
from src.pahe.scheme import Ciphertext, add_plain, dec, enc, linear_combination_sparse
from src.protocols.conv_plan import ConvPlan, Tile, full_padding, plan_conv
from src.protocols.layout import TensorLayout, dilate, dilated_layout
from src.ring.modarith import add_mod
from src.ring.params import RingParams
from src.runtime.timing import Primitive
from src.utils.errors import LayoutError, ProtocolError

if TYPE_CHECKING:
    from src.runtime.session import Session


@dataclass(frozen=True)
class ConvWeights:
    """Bob's filter bank (C_out, C_in, Kd, Kh, Kw) and optional per-channel bias"""

    kernel: np.ndarray
    bias: Optional[np.ndarray] = None

    def check(self, plan: ConvPlan) -> None:
        expected = (plan.out_layout.channels, plan.in_layout.channels) + plan.kernel
        if self.kernel.shape != expected:
            raise LayoutError(f"Kernel shape {self.kernel.shape} does not match plan {expected}")
        if self.bias is not None and self.bias.shape != (plan.out_layout.channels,):
            raise LayoutError(f"Bias shape {self.bias.shape} does not match the output channels")


def flip_kernel(kernel: np.ndarray) -> np.ndarray:
    return np.ascontiguousarray(kernel[:, :, ::-1, ::-1, ::-1])


def _coefficients(values: np.ndarray, params: RingParams) -> PlainVector:
    return PlainVector.from_ints(values, params, Encoding.COEFFICIENTS)


def _alice_tile(session: "Session", plan: ConvPlan, blocks: np.ndarray, tile: Tile) -> np.ndarray:
    params = session.params
    p = params.p
    session.send_ciphertexts(
        [enc(session.secret_key, _coefficients(block, params), session.rng) for block in blocks]
    )
    c_out = plan.out_layout.channels
    replies = session.recv_ciphertexts(c_out * len(plan.channel_groups))
    positions = plan.output_positions(tile)
    share = np.zeros((c_out, positions.shape[0]), dtype=np.uint64)
    for i, ct in enumerate(replies):
        o = i % c_out
        share[o] = add_mod(share[o], dec(session.secret_key, ct).slots[positions], p)
    return share


def _bob_tile(
    session: "Session",
    plan: ConvPlan,
    blocks: np.ndarray,
    tile: Tile,
    weights: ConvWeights,
    fresh_input: bool,
) -> np.ndarray:
    params = session.params
    p = params.p
    cts = session.recv_ciphertexts(plan.in_layout.channels)
    if not fresh_input:
        cts = [add_plain(ct, _coefficients(block, params)) for ct, block in zip(cts, blocks)]

    c_out = plan.out_layout.channels
    taps = weights.kernel.reshape(c_out, plan.in_layout.channels, -1)
    positions = plan.output_positions(tile)
    share = np.zeros((c_out, positions.shape[0]), dtype=np.uint64)
    replies: List[Ciphertext] = []
    for g, (lo, hi) in enumerate(plan.channel_groups):
        outputs = linear_combination_sparse(cts[lo:hi], taps[:, lo:hi, :], plan.exponents)
        for o, ct in enumerate(outputs):
            if g == 0 and weights.bias is not None:
                bias = np.zeros(params.n, dtype=np.int64)
                bias[positions] = int(weights.bias[o])
                ct = add_plain(ct, _coefficients(bias, params))
            masked, mask = mask_ciphertext(
                ct, session.public_key, session.rng, session.settings.flood_bits
            )
            replies.append(masked)
            share[o] = add_mod(share[o], mask.slots[positions], p)
    session.send_ciphertexts(replies)
    return share


def hom_conv(
    session: "Session",
    x: ShareVector,
    plan: ConvPlan,
    weights: Optional[ConvWeights] = None,
    fresh_input: bool = False,
) -> ShareVector:
    """
    Share of the stride-1 convolution of x under the plan

    Args:
        session: The party's session
        x: This party's share, laid out as plan.in_layout
        plan: Tiling and channel grouping agreed by both parties
        weights: Bob's filters (ignored for Alice)
        fresh_input: Bob's share is known to be zero (the input image)

    Returns:
        This party's share of the accumulator, before any rescaling
    """
    if x.layout != plan.in_layout:
        raise LayoutError(f"Input layout {x.layout} does not match plan {plan.in_layout}")
    if session.party is Party.BOB:
        if weights is None:
            raise ProtocolError("Bob needs the filter bank")
        weights.check(plan)
    padded = plan.padded_input(plan.in_layout.unraster(x.values))
    out = np.zeros(plan.out_layout.shape, dtype=np.uint64)
    with session.primitive(Primitive.HOM_CONV, plan.out_layout.size):
        for tile in plan.tiles():
            blocks = plan.input_block(padded, tile)
            if session.party is Party.ALICE:
                values = _alice_tile(session, plan, blocks, tile)
            else:
                values = _bob_tile(
                    session, plan, blocks, tile, weights, fresh_input  # type: ignore[arg-type]
                )
            plan.place_output(out, tile, values)
    return ShareVector(out.reshape(-1), x.modulus, session.party, plan.out_layout)


def plan_transposed_conv(
    in_layout: TensorLayout,
    out_channels: int,
    kernel: Sequence[int],
    stride: Sequence[int],
    params: RingParams,
    weight_bits: int,
    flood_bits: int,
) -> ConvPlan:
    """Plan for the full convolution of the stride-dilated input"""
    kernel = tuple(int(k) for k in kernel)
    return plan_conv(
        dilated_layout(in_layout, stride),
        out_channels,
        kernel,
        full_padding(kernel),  # type: ignore[arg-type]
        params,
        weight_bits,
        flood_bits,
    )


def transposed_conv(
    session: "Session",
    x: ShareVector,
    plan: ConvPlan,
    stride: Sequence[int],
    weights: Optional[ConvWeights] = None,
) -> ShareVector:
    """
    Share of the transposed convolution

    Both parties interleave zeros into their own shares (public structure),
    then run hom_conv with the spatially flipped kernel.
    """
    if x.layout is None:
        raise LayoutError("Transposed convolution needs a tensor layout")
    dilated = dilate(x.layout.unraster(x.values), stride)
    shares = ShareVector(
        dilated.reshape(-1), x.modulus, x.owner, dilated_layout(x.layout, stride)
    )
    flipped = ConvWeights(flip_kernel(weights.kernel), weights.bias) if weights else None
    return hom_conv(session, shares, plan, flipped)
