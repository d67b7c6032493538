"""
Channel concatenation and the final argmax readout
"""

from typing import TYPE_CHECKING, Optional, Tuple

import numpy as np

from src.gc.circuits import MaskRole, bit_width, build_argmax
from src.gc.protocol import run_share_circuit
from src.mpc.sharing import ShareVector
from src.protocols.layout import concat_layouts
from src.runtime.timing import Primitive
from src.utils.errors import LayoutError, ShareMismatchError

if TYPE_CHECKING:
    from src.runtime.session import Session


def concat(a: ShareVector, b: ShareVector) -> ShareVector:
    """Channel concatenation [a | b]; local to each party"""
    if a.modulus != b.modulus or a.owner != b.owner:
        raise ShareMismatchError("Cannot concatenate shares of different moduli or owners")
    if len(b) == 0:
        return a
    if len(a) == 0:
        return b
    if a.layout is None or b.layout is None:
        raise LayoutError("Concatenation needs tensor layouts")
    layout = concat_layouts(a.layout, b.layout)
    return ShareVector(np.concatenate([a.values, b.values]), a.modulus, a.owner, layout)


def split_channels(v: ShareVector, channels: int) -> Tuple[ShareVector, ShareVector]:
    """Inverse of concat: the first `channels` channels and the rest"""
    if v.layout is None or not 0 < channels < v.layout.channels:
        raise LayoutError(f"Cannot split {channels} channels off {v.layout}")
    cut = channels * v.layout.volume
    rest = v.layout.channels - channels
    return (
        ShareVector(v.values[:cut].copy(), v.modulus, v.owner, v.layout.with_channels(channels)),
        ShareVector(v.values[cut:].copy(), v.modulus, v.owner, v.layout.with_channels(rest)),
    )


def readout_argmax(session: "Session", v: ShareVector) -> Optional[np.ndarray]:
    """
    Per-voxel index of the largest label logit

    Only Alice decodes; ties go to the lowest label.

    Returns:
        Alice: (depth, height, width) label map. Bob: None.
    """
    if v.layout is None:
        raise LayoutError("Readout needs a tensor layout")
    labels = v.layout.channels
    p = v.modulus
    k = bit_width(p)
    volume = v.layout.volume
    operands = [v.values[c * volume : (c + 1) * volume] for c in range(labels)]
    with session.primitive(Primitive.ARGMAX_GC, volume):
        out = run_share_circuit(session, build_argmax(labels, k, p), operands, k, MaskRole.NONE)
    if out is None:
        return None
    return out.astype(np.int64).reshape(v.layout.spatial)
