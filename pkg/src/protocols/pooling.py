"""
Secure pooling

Average pooling runs on slot-encoded ciphertexts: each (td, th, W) block of
one channel occupies a contiguous run of one batching row, and per-axis
rotate-and-add passes leave the window sum at every window origin. The
divisor is never applied; the next requantization shift absorbs it.

Max pooling runs one garbled comparison tree per window.
"""

from dataclasses import dataclass
from functools import cached_property
from typing import TYPE_CHECKING, List, Sequence, Tuple

import numpy as np

from src.gc.circuits import MaskRole, bit_width, build_maxpool
from src.gc.protocol import run_share_circuit
from src.mpc.hss import mask_ciphertext
from src.mpc.sharing import Party, ShareVector
from src.pahe.encoding import PlainVector
from src.pahe.keys import RotationKeySet
from src.pahe.scheme import Ciphertext, add, add_plain, dec, enc, rot
from src.protocols.layout import TensorLayout
from src.runtime.timing import Primitive
from src.utils.errors import LayoutError

if TYPE_CHECKING:
    from src.runtime.session import Session

Window = Tuple[int, int, int]


def pooled_layout(layout: TensorLayout, window: Sequence[int]) -> TensorLayout:
    zd, zh, zw = window
    if layout.depth % zd or layout.height % zh or layout.width % zw:
        raise LayoutError(f"Window {tuple(window)} does not tile {layout.spatial}")
    return TensorLayout(
        layout.channels, layout.depth // zd, layout.height // zh, layout.width // zw
    )


@dataclass(frozen=True)
class PoolPlan:
    layout: TensorLayout
    window: Window
    tile: Tuple[int, int]
    row_size: int

    @property
    def out_layout(self) -> TensorLayout:
        return pooled_layout(self.layout, self.window)

    @property
    def block_volume(self) -> int:
        td, th = self.tile
        return td * th * self.layout.width

    @property
    def blocks_per_row(self) -> int:
        return self.row_size // self.block_volume

    @property
    def passes(self) -> Tuple[Tuple[int, ...], ...]:
        """Rotation offsets per axis pass: width, height, depth"""
        zd, zh, zw = self.window
        _, th = self.tile
        w = self.layout.width
        passes = (
            tuple(range(1, zw)),
            tuple(j * w for j in range(1, zh)),
            tuple(j * th * w for j in range(1, zd)),
        )
        return tuple(p for p in passes if p)

    def rotation_steps(self) -> List[int]:
        return sorted({k for offsets in self.passes for k in offsets})

    @property
    def block_count(self) -> int:
        td, th = self.tile
        return self.layout.channels * (self.layout.depth // td) * (self.layout.height // th)

    @property
    def ciphertext_count(self) -> int:
        per_ct = 2 * self.blocks_per_row
        return -(-self.block_count // per_ct)

    @cached_property
    def slot_map(self) -> Tuple[np.ndarray, np.ndarray]:
        """(ciphertext index, slot index) of every tensor element, shaped like the tensor"""
        c, d, h, w = np.indices(self.layout.shape)
        td, th = self.tile
        n_d = self.layout.depth // td
        n_h = self.layout.height // th
        block = (c * n_d + d // td) * n_h + h // th
        offset = ((d % td) * th + h % th) * self.layout.width + w
        per_row = self.blocks_per_row
        ct = block // (2 * per_row)
        row = (block % (2 * per_row)) // per_row
        slot = row * self.row_size + (block % per_row) * self.block_volume + offset
        return ct, slot

    def pack(self, tensor: np.ndarray) -> np.ndarray:
        """(ciphertexts, n) slot vectors holding a (c, d, h, w) tensor"""
        ct, slot = self.slot_map
        out = np.zeros((self.ciphertext_count, 2 * self.row_size), dtype=np.uint64)
        out[ct, slot] = tensor
        return out

    def window_origins(self, slots: np.ndarray) -> np.ndarray:
        """Pooled (c, d/zd, h/zh, w/zw) tensor read from the valid slots"""
        ct, slot = self.slot_map
        zd, zh, zw = self.window
        return slots[ct[:, ::zd, ::zh, ::zw], slot[:, ::zd, ::zh, ::zw]]


def plan_pool(layout: TensorLayout, window: Sequence[int], n: int) -> PoolPlan:
    """
    Largest block (td, th) aligned to the window that fits one batching row

    Raises:
        LayoutError: the window does not tile the tensor, or one window row
            of full width exceeds a batching row
    """
    window = tuple(int(z) for z in window)
    pooled_layout(layout, window)
    zd, zh, _ = window
    row = n // 2
    best = None
    for td in range(zd, layout.depth + 1, zd):
        if layout.depth % td:
            continue
        for th in range(zh, layout.height + 1, zh):
            if layout.height % th or td * th * layout.width > row:
                continue
            if best is None or td * th > best[0] * best[1]:
                best = (td, th)
    if best is None:
        raise LayoutError(
            f"A {zd}x{zh} window of width {layout.width} does not fit a row of {row} slots"
        )
    return PoolPlan(layout, window, best, row)  # type: ignore[arg-type]


def rotate_sum(c: Ciphertext, offsets: Sequence[int], keys: RotationKeySet) -> Ciphertext:
    """c + rot(c, k) for every k in offsets"""
    acc = c
    for k in offsets:
        acc = add(acc, rot(c, k, keys))
    return acc


def avg_pool(c: Ciphertext, plan: PoolPlan, keys: RotationKeySet) -> Ciphertext:
    """Window sums at every window origin of the packed blocks"""
    for offsets in plan.passes:
        c = rotate_sum(c, offsets, keys)
    return c


def avg_pool_shares(session: "Session", v: ShareVector, plan: PoolPlan) -> ShareVector:
    """Share of the window-sum tensor"""
    if v.layout != plan.layout:
        raise LayoutError(f"Input layout {v.layout} does not match plan {plan.layout}")
    params = session.params
    packed = plan.pack(plan.layout.unraster(v.values))
    result = np.zeros_like(packed)
    step = session.ciphertexts_per_frame()
    with session.primitive(Primitive.AVG_POOL, plan.out_layout.size):
        for lo in range(0, packed.shape[0], step):
            rows = packed[lo : lo + step]
            if session.party is Party.ALICE:
                session.send_ciphertexts(
                    [enc(session.secret_key, PlainVector(r), session.rng) for r in rows]
                )
                for i, ct in enumerate(session.recv_ciphertexts(rows.shape[0])):
                    result[lo + i] = dec(session.secret_key, ct).slots
            else:
                replies = []
                for i, ct in enumerate(session.recv_ciphertexts(rows.shape[0])):
                    summed = avg_pool(
                        add_plain(ct, PlainVector(rows[i])), plan, session.rotation_keys
                    )
                    masked, mask = mask_ciphertext(
                        summed, session.public_key, session.rng, session.settings.flood_bits
                    )
                    replies.append(masked)
                    result[lo + i] = mask.slots
                session.send_ciphertexts(replies)
    pooled = plan.window_origins(result)
    return ShareVector(pooled.reshape(-1), v.modulus, session.party, plan.out_layout)


def window_indices(layout: TensorLayout, window: Sequence[int]) -> List[np.ndarray]:
    """Raster indices of each window member, one array per window position"""
    zd, zh, zw = window
    pooled_layout(layout, window)
    idx = np.arange(layout.size).reshape(layout.shape)
    return [
        idx[:, a::zd, b::zh, e::zw].reshape(-1)
        for a in range(zd)
        for b in range(zh)
        for e in range(zw)
    ]


def max_pool(session: "Session", v: ShareVector, window: Sequence[int]) -> ShareVector:
    """Share of the signed maximum of every window"""
    if v.layout is None:
        raise LayoutError("Max pooling needs a tensor layout")
    out_layout = pooled_layout(v.layout, window)
    members = window_indices(v.layout, window)
    p = v.modulus
    k = bit_width(p)
    circuit = build_maxpool(len(members), k, p, MaskRole.EVALUATOR)
    with session.primitive(Primitive.MAXPOOL_GC, out_layout.size):
        out = run_share_circuit(
            session, circuit, [v.values[ix] for ix in members], k, MaskRole.EVALUATOR
        )
    return ShareVector(out.astype(np.uint64), p, session.party, out_layout)
