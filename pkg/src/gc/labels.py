"""
128-bit wire labels

Labels are plain Python ints below 2^128; the permute bit is the least
significant bit.
"""

from typing import List, Sequence

import numpy as np

LABEL_BYTES = 16
LABEL_MASK = (1 << 128) - 1

Label = int


def random_blocks(rng: np.random.Generator, count: int) -> List[Label]:
    """count uniform 128-bit blocks drawn from rng"""
    if count <= 0:
        return []
    raw = rng.bytes(LABEL_BYTES * count)
    return [
        int.from_bytes(raw[i : i + LABEL_BYTES], "little")
        for i in range(0, LABEL_BYTES * count, LABEL_BYTES)
    ]


def permute_bit(label: Label) -> int:
    return label & 1


def pack_labels(labels: Sequence[Label]) -> bytes:
    return b"".join(x.to_bytes(LABEL_BYTES, "little") for x in labels)


def unpack_labels(blob: bytes) -> List[Label]:
    return [
        int.from_bytes(blob[i : i + LABEL_BYTES], "little")
        for i in range(0, len(blob), LABEL_BYTES)
    ]
