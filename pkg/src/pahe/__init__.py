"""
Packed additively homomorphic encryption over RLWE
"""

from src.pahe.encoding import BatchEncoder, Encoding, PlainVector, get_encoder
from src.pahe.keys import PublicKey, RotationKeySet, SecretKey, keygen
from src.pahe.scheme import (
    Ciphertext,
    add,
    add_plain,
    dec,
    enc,
    linear_combination_sparse,
    mul_plain,
    mul_plain_sparse,
    noise_budget,
    rerandomize,
    rot,
    row_swap,
    sub,
    sub_plain,
)

__all__ = [
    "BatchEncoder",
    "Ciphertext",
    "Encoding",
    "PlainVector",
    "PublicKey",
    "RotationKeySet",
    "SecretKey",
    "add",
    "add_plain",
    "dec",
    "enc",
    "get_encoder",
    "keygen",
    "linear_combination_sparse",
    "mul_plain",
    "mul_plain_sparse",
    "noise_budget",
    "rerandomize",
    "rot",
    "row_swap",
    "sub",
    "sub_plain",
]
