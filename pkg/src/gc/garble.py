"""
Yao garbling with free-XOR and point-and-permute

Each instance draws its own offset R (lsb 1) and fresh labels. AND gates
emit four 16-byte rows indexed by the permute bits of the input labels;
XOR gates emit nothing. The row key is a keyed BLAKE2b over both input
labels and a tweak naming the instance and gate.
"""

import hashlib
from dataclasses import dataclass
from typing import List, Sequence, Tuple

import numpy as np

from src.gc.circuit import ONE, ZERO, BoolCircuit, GateOp
from src.gc.labels import LABEL_BYTES, Label, random_blocks
from src.utils.errors import CircuitError, GarbledDecodeError

ROW_BYTES = LABEL_BYTES
ROWS_PER_AND = 4
_HASH_KEY = b"blindseg-gc-v1"


def gate_hash(a: Label, b: Label, tweak: int) -> Label:
    h = hashlib.blake2b(
        a.to_bytes(LABEL_BYTES, "little")
        + b.to_bytes(LABEL_BYTES, "little")
        + tweak.to_bytes(8, "little"),
        digest_size=LABEL_BYTES,
        key=_HASH_KEY,
    )
    return int.from_bytes(h.digest(), "little")


def _tweak(instance: int, gate: int) -> int:
    return (instance << 32) | gate


@dataclass(frozen=True)
class GarbledCircuit:
    """
    Garbled tables for a batch of instances of one circuit

    tables holds instances x and_count x 4 rows. decode_map holds the
    0-labels of every output wire per instance together with each
    instance's offset; it never leaves the garbler.
    """

    circuit_hash: bytes
    instances: int
    and_count: int
    tables: bytes
    decode_map: Tuple[Tuple[Tuple[Label, ...], Label], ...] = ()

    @property
    def table_rows(self) -> int:
        return self.instances * self.and_count * ROWS_PER_AND

    def public(self) -> "GarbledCircuit":
        """Copy without the decode map, as sent to the evaluator"""
        return GarbledCircuit(self.circuit_hash, self.instances, self.and_count, self.tables)


@dataclass(frozen=True)
class GarblerInputs:
    """Per-instance input-label material kept by the garbler"""

    offsets: List[Label]
    # instance -> 0-labels of [ZERO, ONE] + garbler inputs
    garbler_zero: List[List[Label]]
    # instance -> 0-labels of the evaluator inputs
    evaluator_zero: List[List[Label]]

    def garbler_labels(self, instance: int, bits: Sequence[int]) -> List[Label]:
        """Active labels for the constants and the garbler's own input bits"""
        zeros = self.garbler_zero[instance]
        r = self.offsets[instance]
        active = [zeros[0], zeros[1] ^ r]
        active += [z ^ r if bit else z for z, bit in zip(zeros[2:], bits)]
        return active

    def evaluator_pairs(self, instance: int) -> List[Tuple[Label, Label]]:
        r = self.offsets[instance]
        return [(z, z ^ r) for z in self.evaluator_zero[instance]]


def garble(
    circuit: BoolCircuit, instances: int, rng: np.random.Generator
) -> Tuple[GarbledCircuit, GarblerInputs]:
    """
    Garble instances copies of circuit

    Args:
        circuit: Circuit to garble
        instances: Number of independent copies
        rng: Label randomness; identical seeds give bit-identical output

    Returns:
        The garbled circuit (tables plus private decode map) and the input-label
        material for both parties' inputs
    """
    n_garbler = len(circuit.garbler_inputs)
    n_eval = len(circuit.evaluator_inputs)
    per_instance = 1 + 2 + n_garbler + n_eval + circuit.and_count
    blocks = random_blocks(rng, per_instance * instances)

    rows = bytearray(instances * circuit.and_count * ROWS_PER_AND * ROW_BYTES)
    offsets, garbler_zero, evaluator_zero, decode = [], [], [], []
    pos = 0
    row_pos = 0
    gates = circuit.gates
    for inst in range(instances):
        r = blocks[pos] | 1
        pos += 1
        labels = [0] * circuit.n_wires
        gz = blocks[pos : pos + 2 + n_garbler]
        pos += 2 + n_garbler
        ez = blocks[pos : pos + n_eval]
        pos += n_eval
        labels[ZERO], labels[ONE] = gz[0], gz[1]
        for w, z in zip(circuit.garbler_inputs, gz[2:]):
            labels[w] = z
        for w, z in zip(circuit.evaluator_inputs, ez):
            labels[w] = z

        and_index = 0
        for op, a, b, out in gates:
            la, lb = labels[a], labels[b]
            if op == GateOp.XOR:
                labels[out] = la ^ lb
                continue
            c0 = blocks[pos]
            pos += 1
            labels[out] = c0
            tweak = _tweak(inst, and_index)
            base = row_pos + and_index * ROWS_PER_AND * ROW_BYTES
            for i in (0, 1):
                ai = la ^ r if i else la
                for j in (0, 1):
                    bj = lb ^ r if j else lb
                    row = ((ai & 1) << 1) | (bj & 1)
                    value = gate_hash(ai, bj, tweak) ^ (c0 ^ r if i & j else c0)
                    start = base + row * ROW_BYTES
                    rows[start : start + ROW_BYTES] = value.to_bytes(ROW_BYTES, "little")
            and_index += 1
        row_pos += circuit.and_count * ROWS_PER_AND * ROW_BYTES

        offsets.append(r)
        garbler_zero.append(list(gz))
        evaluator_zero.append(list(ez))
        decode.append((tuple(labels[w] for w in circuit.outputs), r))

    garbled = GarbledCircuit(
        circuit.digest(), instances, circuit.and_count, bytes(rows), tuple(decode)
    )
    return garbled, GarblerInputs(offsets, garbler_zero, evaluator_zero)


def evaluate(
    circuit: BoolCircuit,
    garbled: GarbledCircuit,
    instance: int,
    garbler_labels: Sequence[Label],
    evaluator_labels: Sequence[Label],
) -> List[Label]:
    """
    Evaluate one instance given one active label per input wire

    garbler_labels covers [ZERO, ONE] + garbler inputs; evaluator_labels the
    evaluator inputs. Returns the active labels of the output wires.
    """
    if garbled.circuit_hash != circuit.digest():
        raise CircuitError("Garbled tables belong to a different circuit")
    if len(garbler_labels) != 2 + len(circuit.garbler_inputs):
        raise CircuitError("Wrong number of garbler labels")
    if len(evaluator_labels) != len(circuit.evaluator_inputs):
        raise CircuitError("Wrong number of evaluator labels")

    labels = [0] * circuit.n_wires
    labels[ZERO], labels[ONE] = garbler_labels[0], garbler_labels[1]
    for w, lab in zip(circuit.garbler_inputs, garbler_labels[2:]):
        labels[w] = lab
    for w, lab in zip(circuit.evaluator_inputs, evaluator_labels):
        labels[w] = lab

    tables = garbled.tables
    base = instance * circuit.and_count * ROWS_PER_AND * ROW_BYTES
    and_index = 0
    for op, a, b, out in circuit.gates:
        la, lb = labels[a], labels[b]
        if op == GateOp.XOR:
            labels[out] = la ^ lb
            continue
        row = ((la & 1) << 1) | (lb & 1)
        start = base + (and_index * ROWS_PER_AND + row) * ROW_BYTES
        cell = int.from_bytes(tables[start : start + ROW_BYTES], "little")
        labels[out] = gate_hash(la, lb, _tweak(instance, and_index)) ^ cell
        and_index += 1
    return [labels[w] for w in circuit.outputs]


def decode(garbled: GarbledCircuit, instance: int, output_labels: Sequence[Label]) -> List[int]:
    """
    Map output labels back to bits with the garbler's decode map

    Raises:
        GarbledDecodeError: a label matches neither label of its wire
    """
    if not garbled.decode_map:
        raise GarbledDecodeError("No decode map: only the garbler can decode")
    zeros, r = garbled.decode_map[instance]
    if len(output_labels) != len(zeros):
        raise GarbledDecodeError(f"Expected {len(zeros)} output labels, got {len(output_labels)}")
    bits = []
    for z, lab in zip(zeros, output_labels):
        if lab == z:
            bits.append(0)
        elif lab == z ^ r:
            bits.append(1)
        else:
            raise GarbledDecodeError(f"Instance {instance}: output label is invalid")
    return bits
