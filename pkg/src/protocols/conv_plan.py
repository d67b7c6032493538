"""
Convolution planning: tiling over coefficient-encoded ciphertexts

A tile covers td x th output rows of every depth/height position and the
full output width. Its input block (Td, Th, Wp) = (td+Kd-1, th+Kh-1, Wo+Kw-1)
is written row-major into the first Lt = Td*Th*Wp coefficients. The filter
polynomial holds w[k] at degree Lk - off(k), where off(k) is the block offset
of filter tap k and Lk the offset of the last tap, so output (d, h, w) of the
tile appears at coefficient Lk + off(d, h, w). Lt + Lk <= n rules out any
negacyclic wraparound.
"""

from dataclasses import dataclass
from functools import cached_property
from typing import List, Optional, Sequence, Tuple

import numpy as np

from src.pahe import noise
from src.protocols.layout import TensorLayout
from src.ring.params import RingParams
from src.utils.errors import LayoutError, NoiseBudgetError
from src.utils.logger import get_logger

logger = get_logger(__name__)

Kernel = Tuple[int, int, int]
Padding = Tuple[Tuple[int, int], Tuple[int, int], Tuple[int, int]]

# Estimated budget kept in reserve after the returned ciphertext is flooded
BUDGET_RESERVE_BITS = 2.0


@dataclass(frozen=True)
class Tile:
    """Output rows [d0, d0+td) x [h0, h0+th) at full width"""

    d0: int
    h0: int
    td: int
    th: int


@dataclass(frozen=True)
class ConvPlan:
    in_layout: TensorLayout
    out_layout: TensorLayout
    kernel: Kernel
    padding: Padding
    tile: Tuple[int, int]
    n: int
    channel_groups: Tuple[Tuple[int, int], ...]

    @property
    def block(self) -> Tuple[int, int, int]:
        """Input block dims (Td, Th, Wp)"""
        kd, kh, kw = self.kernel
        td, th = self.tile
        return (td + kd - 1, th + kh - 1, self.out_layout.width + kw - 1)

    @property
    def block_slots(self) -> int:
        td, th, wp = self.block
        return td * th * wp

    def _offset(self, d: int, h: int, w: int) -> int:
        _, th, wp = self.block
        return (d * th + h) * wp + w

    @property
    def kernel_span(self) -> int:
        kd, kh, kw = self.kernel
        return self._offset(kd - 1, kh - 1, kw - 1)

    @cached_property
    def exponents(self) -> Tuple[int, ...]:
        """Monomial degree per filter tap, taps in (kd, kh, kw) raster order"""
        kd, kh, kw = self.kernel
        span = self.kernel_span
        return tuple(
            span - self._offset(a, b, c) for a in range(kd) for b in range(kh) for c in range(kw)
        )

    def validate(self) -> None:
        if self.block_slots + self.kernel_span > self.n:
            raise LayoutError(
                f"Tile {self.tile} needs {self.block_slots + self.kernel_span} coefficients, "
                f"ring has {self.n}"
            )
        if not self.channel_groups:
            raise LayoutError("Plan has no channel groups")

    def tiles(self) -> List[Tile]:
        td, th = self.tile
        out = self.out_layout
        return [
            Tile(d0, h0, min(td, out.depth - d0), min(th, out.height - h0))
            for d0 in range(0, out.depth, td)
            for h0 in range(0, out.height, th)
        ]

    def output_positions(self, tile: Tile) -> np.ndarray:
        """Coefficients holding the tile's outputs, in (d, h, w) raster order"""
        d = np.arange(tile.td)[:, None, None]
        h = np.arange(tile.th)[None, :, None]
        w = np.arange(self.out_layout.width)[None, None, :]
        _, th, wp = self.block
        return (self.kernel_span + (d * th + h) * wp + w).reshape(-1)

    def padded_input(self, tensor: np.ndarray) -> np.ndarray:
        """Zero-pad a (c, d, h, w) tensor so every tile block is a plain slice"""
        (dl, _), (hl, _), (wl, wh) = self.padding
        kd, kh, _ = self.kernel
        td, th = self.tile
        out = self.out_layout
        need_d = -(-out.depth // td) * td + kd - 1
        need_h = -(-out.height // th) * th + kh - 1
        c, d, h, w = tensor.shape
        return np.pad(
            tensor,
            ((0, 0), (dl, need_d - d - dl), (hl, need_h - h - hl), (wl, wh)),
        )

    def input_block(self, padded: np.ndarray, tile: Tile) -> np.ndarray:
        """(C, Lt) block of a padded tensor for one tile, row-major"""
        bd, bh, _ = self.block
        block = padded[:, tile.d0 : tile.d0 + bd, tile.h0 : tile.h0 + bh, :]
        return block.reshape(block.shape[0], -1)

    def place_output(self, out: np.ndarray, tile: Tile, values: np.ndarray) -> None:
        """Write (C, positions) tile outputs into a (C, d, h, w) tensor"""
        block = values.reshape(values.shape[0], tile.td, tile.th, self.out_layout.width)
        out[:, tile.d0 : tile.d0 + tile.td, tile.h0 : tile.h0 + tile.th, :] = block


def output_dims(layout: TensorLayout, kernel: Kernel, padding: Padding) -> Tuple[int, int, int]:
    dims = []
    for size, k, (lo, hi) in zip(layout.spatial, kernel, padding):
        out = size + lo + hi - k + 1
        if out < 1:
            raise LayoutError(f"Kernel {kernel} does not fit input {layout.spatial}")
        dims.append(out)
    return tuple(dims)  # type: ignore[return-value]


def same_padding(kernel: Kernel) -> Padding:
    """Stride-1 padding that keeps spatial dims (odd kernels)"""
    for k in kernel:
        if k % 2 == 0:
            raise LayoutError(f"Same padding needs odd kernel dims, got {kernel}")
    return tuple((k // 2, k // 2) for k in kernel)  # type: ignore[return-value]


def full_padding(kernel: Kernel) -> Padding:
    return tuple((k - 1, k - 1) for k in kernel)  # type: ignore[return-value]


def max_group_size(
    params: RingParams, channels: int, taps: int, weight_bits: int, flood_bits: int
) -> int:
    """
    Most input channels one accumulated ciphertext may combine

    Worst case: a fresh encryption plus Bob's share, multiplied by a filter
    with every tap at the weight bound, then masked and flooded.
    """
    weight_max = 1 << max(weight_bits - 1, 0)
    fresh = noise.add_plain_bits(params, noise.fresh_secret_key_bits())
    best = 0
    for size in range(1, channels + 1):
        bits = noise.plain_product_bits(params, fresh, size * taps * weight_max)
        bits = noise.flood_bits(params, noise.add_plain_bits(params, bits), flood_bits)
        if noise.budget_bits(params, bits) < BUDGET_RESERVE_BITS:
            break
        best = size
    return best


def _pick_tile(out: TensorLayout, kernel: Kernel, n: int) -> Optional[Tuple[int, int]]:
    kd, kh, kw = kernel
    wp = out.width + kw - 1
    best = None
    best_key = None
    for td in range(1, out.depth + 1):
        for th in range(1, out.height + 1):
            bd, bh = td + kd - 1, th + kh - 1
            span = ((kd - 1) * bh + kh - 1) * wp + kw - 1
            if bd * bh * wp + span > n:
                break
            tiles = -(-out.depth // td) * -(-out.height // th)
            key = (tiles, bd * bh * wp)
            if best_key is None or key < best_key:
                best, best_key = (td, th), key
    return best


def plan_conv(
    in_layout: TensorLayout,
    out_channels: int,
    kernel: Sequence[int],
    padding: Padding,
    params: RingParams,
    weight_bits: int,
    flood_bits: int,
) -> ConvPlan:
    """
    Choose the tile with the fewest ciphertexts and the channel groups

    Raises:
        LayoutError: no tile fits the ring
        NoiseBudgetError: even a single channel exceeds the noise budget
    """
    kernel = tuple(int(k) for k in kernel)  # type: ignore[assignment]
    d, h, w = output_dims(in_layout, kernel, padding)  # type: ignore[arg-type]
    out_layout = TensorLayout(out_channels, d, h, w)
    tile = _pick_tile(out_layout, kernel, params.n)  # type: ignore[arg-type]
    if tile is None:
        raise LayoutError(
            f"No tile of output {out_layout.shape} with kernel {kernel} fits n={params.n}"
        )
    taps = int(np.prod(kernel))
    group = max_group_size(params, in_layout.channels, taps, weight_bits, flood_bits)
    if group == 0:
        raise NoiseBudgetError(f"A single channel with {taps} taps exceeds the noise budget")
    groups = tuple(
        (lo, min(lo + group, in_layout.channels)) for lo in range(0, in_layout.channels, group)
    )
    plan = ConvPlan(
        in_layout, out_layout, kernel, padding, tile, params.n, groups  # type: ignore[arg-type]
    )
    plan.validate()
    logger.debug(
        f"Conv plan {in_layout.shape}->{out_layout.shape}: tile {tile}, "
        f"{len(plan.tiles())} tiles, {len(groups)} channel groups"
    )
    return plan
