"""
Oblivious transfer of wire labels from precomputed correlations

The dealer hands the sender random pairs (m0, m1) and the receiver a random
choice bit c with m_c. Transfer is one round each way:
    receiver -> sender:  e = b xor c
    sender -> receiver:  y0 = x0 xor m_e,  y1 = x1 xor m_(1 xor e)
    receiver:            x_b = y_b xor m_c
The sender sees only e, which is uniform regardless of b.
"""

from dataclasses import dataclass
from enum import Enum
from typing import List, Optional, Sequence, Tuple

import numpy as np

from src.gc.labels import Label
from src.utils.errors import CorrelationError, ParameterError


class OtMode(str, Enum):
    DEALER = "dealer"
    INTERACTIVE = "interactive"


@dataclass(frozen=True)
class OtCorrelation:
    """
    One party's view of a batch of random-OT correlations

    The sender view fills m0/m1; the receiver view fills choice/chosen.
    """

    count: int
    m0: Optional[List[Label]] = None
    m1: Optional[List[Label]] = None
    choice: Optional[np.ndarray] = None
    chosen: Optional[List[Label]] = None

    @property
    def is_sender(self) -> bool:
        return self.m0 is not None


def receiver_mask_choices(corr: OtCorrelation, bits: np.ndarray) -> np.ndarray:
    """First message: the receiver's choice bits blinded by the correlation"""
    if corr.choice is None:
        raise CorrelationError("Receiver view required")
    bits = np.asarray(bits, dtype=np.uint8)
    if bits.shape[0] != corr.count:
        raise CorrelationError(f"Need {bits.shape[0]} OT correlations, batch holds {corr.count}")
    return bits ^ corr.choice


def sender_respond(
    corr: OtCorrelation, pairs: Sequence[Tuple[Label, Label]], flips: np.ndarray
) -> List[Label]:
    """Second message: y0, y1 interleaved"""
    if corr.m0 is None or corr.m1 is None:
        raise CorrelationError("Sender view required")
    if len(pairs) != corr.count or flips.shape[0] != corr.count:
        raise CorrelationError("OT batch size mismatch")
    out: List[Label] = []
    for (x0, x1), e, m0, m1 in zip(pairs, flips.tolist(), corr.m0, corr.m1):
        if e:
            out += [x0 ^ m1, x1 ^ m0]
        else:
            out += [x0 ^ m0, x1 ^ m1]
    return out


def receiver_finish(corr: OtCorrelation, bits: np.ndarray, masked: Sequence[Label]) -> List[Label]:
    if corr.chosen is None:
        raise CorrelationError("Receiver view required")
    if len(masked) != 2 * corr.count:
        raise CorrelationError("OT response has the wrong length")
    return [
        masked[2 * i + int(b)] ^ mc
        for i, (b, mc) in enumerate(zip(np.asarray(bits).tolist(), corr.chosen))
    ]


def ot_transfer(
    label_pairs: Sequence[Tuple[Label, Label]],
    choice_bits: np.ndarray,
    sender: OtCorrelation,
    receiver: OtCorrelation,
    mode: OtMode = OtMode.DEALER,
) -> List[Label]:
    """
    Run both sides of a transfer in one process

    Returns:
        The receiver's labels, one per choice bit
    """
    if mode != OtMode.DEALER:
        raise ParameterError("Only dealer-assisted OT is available")
    flips = receiver_mask_choices(receiver, choice_bits)
    return receiver_finish(receiver, choice_bits, sender_respond(sender, label_pairs, flips))
