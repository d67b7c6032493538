"""
Exact vectorized modular arithmetic on uint64 residues

Moduli are single words below 2^62. Products are reduced with Shoup's
precomputed-quotient method: for a fixed multiplier w the constant
floor(w * 2^64 / m) turns a*w mod m into one high-half product, one
wrapping low product and a conditional subtraction.
"""

import numpy as np

M32 = np.uint64(0xFFFFFFFF)
S32 = np.uint64(32)
U64 = np.uint64

# Below this bound a*b fits in 64 bits and plain % is exact
SMALL_MODULUS = 1 << 32


def as_residues(values, modulus: int) -> np.ndarray:
    """Reduce any integer array (signed or object) to uint64 residues"""
    arr = np.asarray(values)
    if arr.dtype == object:
        return (arr % modulus).astype(np.uint64)
    if arr.dtype.kind == "u":
        return (arr.astype(np.uint64) % U64(modulus)).astype(np.uint64)
    return np.mod(arr.astype(np.int64), np.int64(modulus)).astype(np.uint64)


def mulhi64(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """High 64 bits of the 128-bit product of two uint64 arrays"""
    a0, a1 = a & M32, a >> S32
    b0, b1 = b & M32, b >> S32
    p00 = a0 * b0
    p01 = a0 * b1
    p10 = a1 * b0
    p11 = a1 * b1
    mid = (p00 >> S32) + (p01 & M32) + (p10 & M32)
    return p11 + (p01 >> S32) + (p10 >> S32) + (mid >> S32)


def shoup_precompute(w, modulus: int) -> np.ndarray:
    """floor(w * 2^64 / modulus) for residues w < modulus"""
    w_obj = np.asarray(w).astype(object)
    return ((w_obj << 64) // modulus).astype(np.uint64)


def mul_shoup(a: np.ndarray, w: np.ndarray, w_shoup: np.ndarray, modulus: int) -> np.ndarray:
    """a * w mod modulus for a fixed multiplier w with its Shoup constant"""
    m = U64(modulus)
    hi = mulhi64(a, w_shoup)
    r = a * w - hi * m
    return np.where(r >= m, r - m, r)


def add_mod(a: np.ndarray, b: np.ndarray, modulus: int) -> np.ndarray:
    m = U64(modulus)
    s = a + b
    return np.where(s >= m, s - m, s)


def sub_mod(a: np.ndarray, b: np.ndarray, modulus: int) -> np.ndarray:
    m = U64(modulus)
    d = a + (m - b)
    return np.where(d >= m, d - m, d)


def neg_mod(a: np.ndarray, modulus: int) -> np.ndarray:
    m = U64(modulus)
    return np.where(a == 0, a, m - a)


def mul_mod(a: np.ndarray, b: np.ndarray, modulus: int) -> np.ndarray:
    """
    a * b mod modulus for two variable operands

    Small moduli stay in uint64; large ones go through a Shoup constant
    computed for b on the fly.
    """
    a = np.asarray(a, dtype=np.uint64)
    b = np.asarray(b, dtype=np.uint64)
    if modulus < SMALL_MODULUS:
        return (a * b) % U64(modulus)
    return mul_shoup(a, b, shoup_precompute(b, modulus), modulus)


def scalar_mul_mod(a: np.ndarray, scalar: int, modulus: int) -> np.ndarray:
    s = scalar % modulus
    return mul_shoup(a, U64(s), U64((s << 64) // modulus), modulus)


def centered(a: np.ndarray, modulus: int) -> np.ndarray:
    """Signed representatives in [-modulus/2, modulus/2) as int64"""
    signed = np.asarray(a).astype(np.int64)
    half = modulus // 2
    return np.where(signed >= modulus - half, signed - modulus, signed)
