"""
Tensor files ("BUNT") for inputs, weights and label maps

Layout, little-endian:
    magic 4s | dtype code u8 | rank u8 | dims u32 * rank | values i64 * prod(dims)

Weight bundles hold one record per tensor, each prefixed by its name:
    magic "BUNW" | count u32 | per tensor: name length u16 | name utf-8 | BUNT record
"""

import struct
from pathlib import Path
from typing import Dict, Mapping, Tuple

import numpy as np

from src.protocols.conv import ConvWeights
from src.utils.errors import FormatError

TENSOR_MAGIC = b"BUNT"
BUNDLE_MAGIC = b"BUNW"
DTYPE_INT64 = 1
_HEADER = struct.Struct("<4sBB")
_DIM = struct.Struct("<I")
_COUNT = struct.Struct("<I")
_NAME = struct.Struct("<H")
BIAS_SUFFIX = ".bias"


def dump_tensor(values: np.ndarray) -> bytes:
    values = np.asarray(values)
    if values.ndim > 255:
        raise FormatError(f"Rank {values.ndim} does not fit the header")
    dims = b"".join(_DIM.pack(int(d)) for d in values.shape)
    body = np.ascontiguousarray(values, dtype="<i8").tobytes()
    return _HEADER.pack(TENSOR_MAGIC, DTYPE_INT64, values.ndim) + dims + body


def load_tensor_record(blob: bytes, offset: int = 0) -> Tuple[np.ndarray, int]:
    """Parse one record at offset; returns (tensor, offset after it)"""
    if len(blob) - offset < _HEADER.size:
        raise FormatError("Truncated tensor header")
    magic, dtype, rank = _HEADER.unpack_from(blob, offset)
    if magic != TENSOR_MAGIC:
        raise FormatError(f"Bad tensor magic {magic!r}")
    if dtype != DTYPE_INT64:
        raise FormatError(f"Unsupported tensor dtype code {dtype}")
    offset += _HEADER.size
    if len(blob) - offset < rank * _DIM.size:
        raise FormatError("Truncated tensor dims")
    dims = tuple(_DIM.unpack_from(blob, offset + i * _DIM.size)[0] for i in range(rank))
    offset += rank * _DIM.size
    count = int(np.prod(dims, dtype=np.int64))
    end = offset + 8 * count
    if len(blob) < end:
        raise FormatError(f"Tensor body holds {len(blob) - offset} bytes, expected {8 * count}")
    values = np.frombuffer(blob[offset:end], dtype="<i8").astype(np.int64).reshape(dims)
    return values, end


def load_tensor_bytes(blob: bytes) -> np.ndarray:
    values, end = load_tensor_record(blob)
    if end != len(blob):
        raise FormatError(f"{len(blob) - end} trailing bytes after tensor")
    return values


def save_tensor(path: Path, values: np.ndarray) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(dump_tensor(values))


def load_tensor(path: Path) -> np.ndarray:
    try:
        blob = Path(path).read_bytes()
    except OSError as e:
        raise FormatError(f"Cannot read tensor file {path}: {e}") from e
    return load_tensor_bytes(blob)


def dump_weights(weights: Mapping[str, ConvWeights]) -> bytes:
    records = []
    for name in sorted(weights):
        w = weights[name]
        records.append((name, w.kernel))
        if w.bias is not None:
            records.append((name + BIAS_SUFFIX, w.bias))
    out = [BUNDLE_MAGIC, _COUNT.pack(len(records))]
    for name, tensor in records:
        encoded = name.encode()
        out.append(_NAME.pack(len(encoded)) + encoded + dump_tensor(tensor))
    return b"".join(out)


def load_weights_bytes(blob: bytes) -> Dict[str, ConvWeights]:
    if len(blob) < 4 + _COUNT.size or blob[:4] != BUNDLE_MAGIC:
        raise FormatError("Bad weight bundle magic")
    (count,) = _COUNT.unpack_from(blob, 4)
    offset = 4 + _COUNT.size
    tensors: Dict[str, np.ndarray] = {}
    for _ in range(count):
        if len(blob) - offset < _NAME.size:
            raise FormatError("Truncated weight bundle")
        (size,) = _NAME.unpack_from(blob, offset)
        offset += _NAME.size
        name = blob[offset : offset + size].decode("utf-8", errors="strict")
        offset += size
        tensors[name], offset = load_tensor_record(blob, offset)
    if offset != len(blob):
        raise FormatError(f"{len(blob) - offset} trailing bytes after weight bundle")
    return {
        name: ConvWeights(kernel, tensors.get(name + BIAS_SUFFIX))
        for name, kernel in tensors.items()
        if not name.endswith(BIAS_SUFFIX)
    }


def save_weights(path: Path, weights: Mapping[str, ConvWeights]) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(dump_weights(weights))


def load_weights(path: Path) -> Dict[str, ConvWeights]:
    try:
        blob = Path(path).read_bytes()
    except OSError as e:
        raise FormatError(f"Cannot read weight file {path}: {e}") from e
    return load_weights_bytes(blob)
