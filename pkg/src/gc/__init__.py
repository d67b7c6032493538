"""
Garbled circuits: circuit construction, garbling, evaluation and label OT
"""

from src.gc.circuit import BoolCircuit, CircuitBuilder, evaluate_plain
from src.gc.circuits import (
    MaskRole,
    bit_width,
    build_argmax,
    build_maxpool,
    build_relu_reshare,
    build_truncation,
)
from src.gc.garble import GarbledCircuit, decode, evaluate, garble
from src.gc.ot import OtCorrelation, OtMode, ot_transfer

__all__ = [
    "BoolCircuit",
    "CircuitBuilder",
    "GarbledCircuit",
    "MaskRole",
    "OtCorrelation",
    "OtMode",
    "bit_width",
    "build_argmax",
    "build_maxpool",
    "build_relu_reshare",
    "build_truncation",
    "decode",
    "evaluate",
    "evaluate_plain",
    "garble",
    "ot_transfer",
]
