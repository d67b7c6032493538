"""
Tensor layouts

Tensors are (channels, depth, height, width) and flatten in raster order
c, d, h, w with width fastest. 2D tensors use depth 1.
"""

from dataclasses import dataclass
from typing import Sequence, Tuple

import numpy as np

from src.utils.errors import LayoutError

Dims = Tuple[int, int, int, int]


@dataclass(frozen=True)
class TensorLayout:
    channels: int
    depth: int
    height: int
    width: int

    def __post_init__(self) -> None:
        if min(self.shape) < 1:
            raise LayoutError(f"Layout dims must be positive, got {self.shape}")

    @classmethod
    def of(cls, dims: Sequence[int]) -> "TensorLayout":
        """From (c, d, h, w), or (c, h, w) for 2D tensors"""
        dims = tuple(int(x) for x in dims)
        if len(dims) == 3:
            dims = (dims[0], 1, dims[1], dims[2])
        if len(dims) != 4:
            raise LayoutError(f"Expected 3 or 4 dims, got {dims}")
        return cls(*dims)

    @property
    def shape(self) -> Dims:
        return (self.channels, self.depth, self.height, self.width)

    @property
    def spatial(self) -> Tuple[int, int, int]:
        return (self.depth, self.height, self.width)

    @property
    def volume(self) -> int:
        return self.depth * self.height * self.width

    @property
    def size(self) -> int:
        return self.channels * self.volume

    def with_channels(self, channels: int) -> "TensorLayout":
        return TensorLayout(channels, self.depth, self.height, self.width)

    def raster(self, tensor: np.ndarray) -> np.ndarray:
        """Flatten a (c, d, h, w) tensor"""
        tensor = np.asarray(tensor)
        if tensor.shape != self.shape:
            raise LayoutError(f"Tensor shape {tensor.shape} does not match layout {self.shape}")
        return tensor.reshape(-1)

    def unraster(self, flat: np.ndarray) -> np.ndarray:
        flat = np.asarray(flat)
        if flat.ndim != 1 or flat.shape[0] != self.size:
            raise LayoutError(f"Vector of {flat.shape} cannot fill layout {self.shape}")
        return flat.reshape(self.shape)

    def channel_slice(self, start: int, stop: int) -> slice:
        """Raster range of a channel interval"""
        return slice(start * self.volume, stop * self.volume)


def concat_layouts(a: TensorLayout, b: TensorLayout) -> TensorLayout:
    if a.spatial != b.spatial:
        raise LayoutError(f"Cannot concatenate spatial dims {a.spatial} and {b.spatial}")
    return a.with_channels(a.channels + b.channels)


def dilate(tensor: np.ndarray, stride: Sequence[int]) -> np.ndarray:
    """Insert stride-1 zeros between neighbours along d, h, w"""
    sd, sh, sw = stride
    c, d, h, w = tensor.shape
    out = np.zeros((c, sd * (d - 1) + 1, sh * (h - 1) + 1, sw * (w - 1) + 1), dtype=tensor.dtype)
    out[:, ::sd, ::sh, ::sw] = tensor
    return out


def dilated_layout(layout: TensorLayout, stride: Sequence[int]) -> TensorLayout:
    sd, sh, sw = stride
    return TensorLayout(
        layout.channels,
        sd * (layout.depth - 1) + 1,
        sh * (layout.height - 1) + 1,
        sw * (layout.width - 1) + 1,
    )
