"""
Modular arithmetic and number-theoretic transforms
"""

from src.ring.ntt import (
    ConvStyle,
    Domain,
    ModPoly,
    ntt_forward,
    ntt_inverse,
    pointwise_mul,
    poly_conv_reference,
    poly_multiply,
)
from src.ring.params import ModulusId, RingParams

__all__ = [
    "ConvStyle",
    "Domain",
    "ModPoly",
    "ModulusId",
    "RingParams",
    "ntt_forward",
    "ntt_inverse",
    "pointwise_mul",
    "poly_conv_reference",
    "poly_multiply",
]
