"""
gc-blob payload: circuit hash | gate count | AND count | instances | OT batch | tables
"""

import struct
from typing import Tuple

from src.gc.circuit import BoolCircuit
from src.gc.garble import ROW_BYTES, ROWS_PER_AND, GarbledCircuit
from src.utils.errors import FormatError

_HEADER = struct.Struct("<32sIIIq")


def dump_garbled(circuit: BoolCircuit, garbled: GarbledCircuit, ot_batch: int) -> bytes:
    """Serialize the evaluator's part of a garbled batch; the decode map is never included"""
    return (
        _HEADER.pack(
            garbled.circuit_hash, len(circuit.gates), garbled.and_count, garbled.instances, ot_batch
        )
        + garbled.tables
    )


def load_garbled(blob: bytes, circuit: BoolCircuit) -> Tuple[GarbledCircuit, int]:
    """Parse a gc-blob against the circuit the evaluator expects; returns (tables, OT batch)"""
    if len(blob) < _HEADER.size:
        raise FormatError("Truncated gc-blob header")
    digest, gates, and_count, instances, ot_batch = _HEADER.unpack_from(blob, 0)
    if digest != circuit.digest() or gates != len(circuit.gates):
        raise FormatError(f"gc-blob does not match circuit {circuit.name}")
    if and_count != circuit.and_count:
        raise FormatError("gc-blob AND count mismatch")
    tables = blob[_HEADER.size :]
    if len(tables) != instances * and_count * ROWS_PER_AND * ROW_BYTES:
        raise FormatError("gc-blob table size mismatch")
    return GarbledCircuit(digest, instances, and_count, bytes(tables)), ot_batch
