"""
Boolean circuits of XOR and AND gates

Wire 0 is constant 0 and wire 1 is constant 1; both are garbler inputs so
NOT is an XOR with wire 1. The builder folds constants and trivial gates,
so word-level helpers can mix public constants with secret wires freely.
"""

import hashlib
from dataclasses import dataclass, field
from enum import IntEnum
from typing import Dict, List, Sequence, Tuple

from src.utils.errors import CircuitError

ZERO = 0
ONE = 1


class GateOp(IntEnum):
    XOR = 0
    AND = 1


# (op, in0, in1, out)
Gate = Tuple[int, int, int, int]


@dataclass(frozen=True)
class BoolCircuit:
    """
    Topologically ordered gate list with declared inputs and outputs

    garbler_inputs and evaluator_inputs list wire ids in input-bit order;
    outputs may reference any wire, including inputs and constants.
    """

    name: str
    n_wires: int
    gates: Tuple[Gate, ...]
    garbler_inputs: Tuple[int, ...]
    evaluator_inputs: Tuple[int, ...]
    outputs: Tuple[int, ...]
    and_count: int = field(init=False)
    _digest: bytes = field(init=False, repr=False)

    def __post_init__(self) -> None:
        object.__setattr__(self, "and_count", sum(1 for g in self.gates if g[0] == GateOp.AND))
        self.validate()
        object.__setattr__(self, "_digest", self._structure_hash())

    @property
    def xor_count(self) -> int:
        return len(self.gates) - self.and_count

    def validate(self) -> None:
        driven = {ZERO, ONE}
        for w in self.garbler_inputs + self.evaluator_inputs:
            if w in driven:
                raise CircuitError(f"{self.name}: wire {w} driven more than once")
            driven.add(w)
        for op, a, b, out in self.gates:
            if op not in (GateOp.XOR, GateOp.AND):
                raise CircuitError(f"{self.name}: unknown gate op {op}")
            if a not in driven or b not in driven:
                raise CircuitError(f"{self.name}: gate reads undriven wire")
            if out in driven:
                raise CircuitError(f"{self.name}: wire {out} driven more than once")
            driven.add(out)
        if len(driven) != self.n_wires:
            raise CircuitError(f"{self.name}: {self.n_wires - len(driven)} wires never driven")
        for w in self.outputs:
            if w not in driven:
                raise CircuitError(f"{self.name}: output wire {w} undriven")

    def digest(self) -> bytes:
        """SHA-256 over the structure; both parties compare it before evaluating"""
        return self._digest

    def _structure_hash(self) -> bytes:
        h = hashlib.sha256(self.name.encode())
        for part in (
            (self.n_wires,),
            self.garbler_inputs,
            self.evaluator_inputs,
            self.outputs,
        ):
            h.update(len(part).to_bytes(4, "little"))
            h.update(b"".join(x.to_bytes(4, "little") for x in part))
        for gate in self.gates:
            h.update(b"".join(x.to_bytes(4, "little") for x in gate))
        return h.digest()


def evaluate_plain(
    circuit: BoolCircuit, garbler_bits: Sequence[int], evaluator_bits: Sequence[int]
) -> List[int]:
    """Cleartext evaluation; the reference for garbled evaluation"""
    if len(garbler_bits) != len(circuit.garbler_inputs):
        raise CircuitError(
            f"{circuit.name}: expected {len(circuit.garbler_inputs)} garbler bits, "
            f"got {len(garbler_bits)}"
        )
    if len(evaluator_bits) != len(circuit.evaluator_inputs):
        raise CircuitError(
            f"{circuit.name}: expected {len(circuit.evaluator_inputs)} evaluator bits, "
            f"got {len(evaluator_bits)}"
        )
    values = [0] * circuit.n_wires
    values[ONE] = 1
    for w, bit in zip(circuit.garbler_inputs, garbler_bits):
        values[w] = int(bit) & 1
    for w, bit in zip(circuit.evaluator_inputs, evaluator_bits):
        values[w] = int(bit) & 1
    for op, a, b, out in circuit.gates:
        values[out] = values[a] ^ values[b] if op == GateOp.XOR else values[a] & values[b]
    return [values[w] for w in circuit.outputs]


class CircuitBuilder:
    """Incremental construction with constant folding"""

    def __init__(self, name: str):
        self.name = name
        self._next = 2
        self._gates: List[Gate] = []
        self._garbler: List[int] = []
        self._evaluator: List[int] = []
        self._outputs: List[int] = []
        self._memo: Dict[Tuple[int, int, int], int] = {}

    def _wire(self) -> int:
        w = self._next
        self._next += 1
        return w

    def garbler_input(self, width: int) -> List[int]:
        wires = [self._wire() for _ in range(width)]
        self._garbler.extend(wires)
        return wires

    def evaluator_input(self, width: int) -> List[int]:
        wires = [self._wire() for _ in range(width)]
        self._evaluator.extend(wires)
        return wires

    def _gate(self, op: GateOp, a: int, b: int) -> int:
        if a > b:
            a, b = b, a
        key = (int(op), a, b)
        if key in self._memo:
            return self._memo[key]
        out = self._wire()
        self._gates.append((int(op), a, b, out))
        self._memo[key] = out
        return out

    def xor(self, a: int, b: int) -> int:
        if a == b:
            return ZERO
        if a == ZERO:
            return b
        if b == ZERO:
            return a
        if a == ONE and b == ONE:
            return ZERO
        return self._gate(GateOp.XOR, a, b)

    def and_(self, a: int, b: int) -> int:
        if a == ZERO or b == ZERO:
            return ZERO
        if a == ONE:
            return b
        if b == ONE or a == b:
            return a
        return self._gate(GateOp.AND, a, b)

    def not_(self, a: int) -> int:
        if a == ZERO:
            return ONE
        if a == ONE:
            return ZERO
        return self._gate(GateOp.XOR, a, ONE)

    def or_(self, a: int, b: int) -> int:
        return self.xor(self.xor(a, b), self.and_(a, b))

    def output(self, wires: Sequence[int]) -> None:
        self._outputs.extend(wires)

    def build(self) -> BoolCircuit:
        return BoolCircuit(
            name=self.name,
            n_wires=self._next,
            gates=tuple(self._gates),
            garbler_inputs=tuple(self._garbler),
            evaluator_inputs=tuple(self._evaluator),
            outputs=tuple(self._outputs),
        )
