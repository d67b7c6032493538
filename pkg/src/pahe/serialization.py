"""
Binary formats for ciphertexts and key material

Ciphertext record ("BUN1"), all little-endian:
    magic 4s | n u32 | q u64 | p u64 | layout u8 | noise estimate f64
    | c0: n x u64 | c1: n x u64

Key record ("BUNK"):
    magic 4s | n u32 | q u64 | p u64 | has_secret u8 | key count u32
    | [s: n x u64] | pk b, a: n x u64 each
    | per key: step i64 (-1 = row swap) | galois u32 | digits u32
      | digits x (k0: n x u64, k1: n x u64)
"""

import struct
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from src.pahe.encoding import Encoding
from src.pahe.keys import (
    ROW_SWAP,
    FixedOperand,
    KeySwitchKey,
    PublicKey,
    RotationKeySet,
    SecretKey,
)
from src.pahe.scheme import Ciphertext
from src.ring.params import RingParams
from src.utils.errors import FormatError

CT_MAGIC = b"BUN1"
KEY_MAGIC = b"BUNK"
_CT_HEADER = struct.Struct("<4sIQQBd")
_KEY_HEADER = struct.Struct("<4sIQQBI")
_KEY_ENTRY = struct.Struct("<qII")
_COUNT = struct.Struct("<I")

_LAYOUT_CODES = {Encoding.SLOTS: 0, Encoding.COEFFICIENTS: 1}
_LAYOUT_BY_CODE = {v: k for k, v in _LAYOUT_CODES.items()}


def _words(arr: np.ndarray) -> bytes:
    return np.ascontiguousarray(arr, dtype="<u8").tobytes()


def _read_words(blob: bytes, offset: int, n: int) -> Tuple[np.ndarray, int]:
    end = offset + 8 * n
    if end > len(blob):
        raise FormatError("Truncated polynomial data")
    return np.frombuffer(blob, dtype="<u8", count=n, offset=offset).astype(np.uint64), end


def dump_ciphertext(c: Ciphertext) -> bytes:
    header = _CT_HEADER.pack(
        CT_MAGIC, c.params.n, c.params.q, c.params.p, _LAYOUT_CODES[c.layout], c.noise_bits
    )
    return header + _words(c.c0.coeffs) + _words(c.c1.coeffs)


def load_ciphertext(
    blob: bytes, params: RingParams, offset: int = 0
) -> Tuple[Ciphertext, int]:
    """Parse one record starting at offset; returns the ciphertext and the next offset"""
    if len(blob) - offset < _CT_HEADER.size:
        raise FormatError("Truncated ciphertext header")
    magic, n, q, p, layout, noise_bits = _CT_HEADER.unpack_from(blob, offset)
    if magic != CT_MAGIC:
        raise FormatError(f"Bad ciphertext magic {magic!r}")
    if (n, q, p) != (params.n, params.q, params.p):
        raise FormatError("Ciphertext parameters do not match the session parameters")
    if layout not in _LAYOUT_BY_CODE:
        raise FormatError(f"Unknown slot-layout tag {layout}")
    offset += _CT_HEADER.size
    c0, offset = _read_words(blob, offset, n)
    c1, offset = _read_words(blob, offset, n)
    if (c0 >= np.uint64(q)).any() or (c1 >= np.uint64(q)).any():
        raise FormatError("Ciphertext coefficient out of range")
    return Ciphertext.build(params, c0, c1, _LAYOUT_BY_CODE[layout], noise_bits), offset


def dump_ciphertexts(cts: Sequence[Ciphertext]) -> bytes:
    return _COUNT.pack(len(cts)) + b"".join(dump_ciphertext(c) for c in cts)


def load_ciphertexts(blob: bytes, params: RingParams) -> List[Ciphertext]:
    if len(blob) < _COUNT.size:
        raise FormatError("Truncated ciphertext batch")
    (count,) = _COUNT.unpack_from(blob, 0)
    offset = _COUNT.size
    out = []
    for _ in range(count):
        ct, offset = load_ciphertext(blob, params, offset)
        out.append(ct)
    if offset != len(blob):
        raise FormatError("Trailing bytes after ciphertext batch")
    return out


def dump_keys(
    params: RingParams,
    public: PublicKey,
    rot_keys: RotationKeySet,
    secret: Optional[SecretKey] = None,
) -> bytes:
    """Serialize key material; the secret key is included only when given"""
    parts = [
        _KEY_HEADER.pack(
            KEY_MAGIC, params.n, params.q, params.p, int(secret is not None), len(rot_keys.keys)
        )
    ]
    if secret is not None:
        parts.append(_words(secret.s))
    parts += [_words(public.b), _words(public.a)]
    for step in rot_keys.steps:
        key = rot_keys.keys[step]
        code = -1 if step == ROW_SWAP else int(step)
        parts.append(_KEY_ENTRY.pack(code, key.galois, len(key.raw0)))
        for k0, k1 in zip(key.raw0, key.raw1):
            parts += [_words(k0), _words(k1)]
    return b"".join(parts)


def load_keys_blob(
    blob: bytes, params: RingParams
) -> Tuple[Optional[SecretKey], PublicKey, RotationKeySet]:
    if len(blob) < _KEY_HEADER.size:
        raise FormatError("Truncated key header")
    magic, n, q, p, has_secret, count = _KEY_HEADER.unpack_from(blob, 0)
    if magic != KEY_MAGIC:
        raise FormatError(f"Bad key magic {magic!r}")
    if (n, q, p) != (params.n, params.q, params.p):
        raise FormatError("Key parameters do not match the session parameters")
    offset = _KEY_HEADER.size
    s = None
    if has_secret:
        s, offset = _read_words(blob, offset, n)
    b, offset = _read_words(blob, offset, n)
    a, offset = _read_words(blob, offset, n)
    public = PublicKey.create(params, b, a)

    keys: Dict[Union[int, str], KeySwitchKey] = {}
    for _ in range(count):
        if offset + _KEY_ENTRY.size > len(blob):
            raise FormatError("Truncated key-switching entry")
        code, galois, digits = _KEY_ENTRY.unpack_from(blob, offset)
        offset += _KEY_ENTRY.size
        raw0, raw1 = [], []
        for _ in range(digits):
            k0, offset = _read_words(blob, offset, n)
            k1, offset = _read_words(blob, offset, n)
            raw0.append(k0)
            raw1.append(k1)
        step: Union[int, str] = ROW_SWAP if code < 0 else code
        keys[step] = KeySwitchKey(
            galois,
            [FixedOperand.from_coeffs(x, params) for x in raw0],
            [FixedOperand.from_coeffs(x, params) for x in raw1],
            raw0,
            raw1,
        )
    if offset != len(blob):
        raise FormatError("Trailing bytes after key material")

    secret = None
    if s is not None:
        secret = SecretKey(params, s, FixedOperand.from_coeffs(s, params), public)
    return secret, public, RotationKeySet(params, keys)


def save_keys(path: Path, sk: SecretKey, rot_keys: RotationKeySet) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(dump_keys(sk.params, sk.public, rot_keys, secret=sk))


def load_keys(path: Path, params: RingParams) -> Tuple[SecretKey, RotationKeySet]:
    try:
        blob = Path(path).read_bytes()
    except OSError as e:
        raise FormatError(f"Cannot read key file {path}: {e}") from e
    secret, _, rot_keys = load_keys_blob(blob, params)
    if secret is None:
        raise FormatError(f"Key file {path} holds no secret key")
    return secret, rot_keys
