"""
Two-party execution of share circuits

Alice garbles and decodes, Bob evaluates. Instances are processed in
chunks of settings.gc_chunk; per chunk the frames are:
    Alice -> Bob   gc-blob  garbled tables
    Alice -> Bob   gc-blob  Alice's active input labels
    Bob   -> Alice ot-block blinded choice bits
    Alice -> Bob   ot-block masked label pairs
    Bob   -> Alice gc-blob  output labels
Both tapes draw the chunk's mask batch and OT batch in the same order.
"""

from typing import TYPE_CHECKING, Optional, Sequence

import numpy as np

from src.gc.circuit import BoolCircuit
from src.gc.circuits import MaskRole
from src.gc.garble import decode, evaluate, garble
from src.gc.labels import pack_labels, unpack_labels
from src.gc.ot import receiver_finish, receiver_mask_choices, sender_respond
from src.gc.wire import dump_garbled, load_garbled
from src.mpc.sharing import Party
from src.runtime.frames import MessageType
from src.utils.errors import CircuitError

if TYPE_CHECKING:
    from src.runtime.session import Session


def to_bits(values: np.ndarray, width: int) -> np.ndarray:
    """(N,) integers -> (N, width) little-endian bits"""
    shifts = np.arange(width, dtype=np.uint64)
    return ((np.asarray(values, dtype=np.uint64)[:, None] >> shifts) & np.uint64(1)).astype(
        np.uint8
    )


def from_bits(bits: np.ndarray) -> np.ndarray:
    weights = np.uint64(1) << np.arange(bits.shape[1], dtype=np.uint64)
    return (bits.astype(np.uint64) * weights).sum(axis=1).astype(np.uint64)


def run_share_circuit(
    session: "Session",
    circuit: BoolCircuit,
    operands: Sequence[np.ndarray],
    width: int,
    mask_role: MaskRole,
) -> Optional[np.ndarray]:
    """
    Evaluate circuit on every element of this party's operand shares

    Args:
        session: The party's session
        circuit: A share circuit over len(operands) operands of width bits
        operands: This party's share values, one array per operand, equal lengths
        width: Bits per operand
        mask_role: Whether the circuit consumes a fresh evaluator mask

    Returns:
        Alice: the decoded output integers per element.
        Bob: his masks (his share of the output), or None without a mask.
    """
    if not operands:
        raise CircuitError("Share circuit needs at least one operand")
    count = int(operands[0].shape[0])
    if any(int(op.shape[0]) != count for op in operands):
        raise CircuitError("Operand arrays differ in length")
    if len(circuit.garbler_inputs) != len(operands) * width:
        raise CircuitError(f"{circuit.name} expects {len(circuit.garbler_inputs)} garbler bits")

    own_bits = (
        np.concatenate([to_bits(op, width) for op in operands], axis=1)
        if count
        else np.zeros((0, 0), dtype=np.uint8)
    )
    chunk = session.settings.gc_chunk
    results = []
    for lo in range(0, count, chunk):
        hi = min(count, lo + chunk)
        if session.party is Party.ALICE:
            results.append(_garbler_chunk(session, circuit, own_bits[lo:hi], mask_role))
        else:
            results.append(_evaluator_chunk(session, circuit, own_bits[lo:hi], width, mask_role))
    session.ledger.record_gates(circuit.and_count * count)

    if session.party is Party.BOB and mask_role == MaskRole.NONE:
        return None
    if not results:
        return np.zeros(0, dtype=np.uint64)
    return np.concatenate(results)


def _draw_masks(session: "Session", count: int, mask_role: MaskRole) -> Optional[np.ndarray]:
    if mask_role == MaskRole.NONE:
        return None
    masks, tag = session.tape.gc_masks(count)
    session.tape.consume(tag)
    return masks


def _garbler_chunk(
    session: "Session", circuit: BoolCircuit, bits: np.ndarray, mask_role: MaskRole
) -> np.ndarray:
    n = bits.shape[0]
    _draw_masks(session, n, mask_role)
    n_eval = len(circuit.evaluator_inputs)
    ot_corr, ot_tag = session.tape.ot(n * n_eval)
    session.tape.consume(ot_tag)

    garbled, inputs = garble(circuit, n, session.rng)
    session.send_bytes(MessageType.GC_BLOB, dump_garbled(circuit, garbled, ot_tag.batch))
    own = []
    for i, row in enumerate(bits.tolist()):
        own += inputs.garbler_labels(i, row)
    session.send_bytes(MessageType.GC_BLOB, pack_labels(own))

    blinded = np.frombuffer(session.recv_bytes(MessageType.OT_BLOCK), dtype=np.uint8)
    flips = np.unpackbits(blinded, count=n * n_eval)
    pairs = [pair for i in range(n) for pair in inputs.evaluator_pairs(i)]
    session.send_bytes(MessageType.OT_BLOCK, pack_labels(sender_respond(ot_corr, pairs, flips)))

    out_labels = unpack_labels(session.recv_bytes(MessageType.GC_BLOB))
    n_out = len(circuit.outputs)
    if len(out_labels) != n * n_out:
        raise CircuitError("Output label count mismatch")
    decoded = np.array(
        [decode(garbled, i, out_labels[i * n_out : (i + 1) * n_out]) for i in range(n)],
        dtype=np.uint8,
    ).reshape(n, n_out)
    return from_bits(decoded)


def _evaluator_chunk(
    session: "Session", circuit: BoolCircuit, bits: np.ndarray, width: int, mask_role: MaskRole
) -> Optional[np.ndarray]:
    n = bits.shape[0]
    masks = _draw_masks(session, n, mask_role)
    if masks is not None:
        bits = np.concatenate([bits, to_bits(masks, width)], axis=1)
    n_eval = len(circuit.evaluator_inputs)
    if bits.shape[1] != n_eval:
        raise CircuitError(f"{circuit.name} expects {n_eval} evaluator bits")
    ot_corr, ot_tag = session.tape.ot(n * n_eval)
    session.tape.consume(ot_tag)

    garbled, ot_batch = load_garbled(session.recv_bytes(MessageType.GC_BLOB), circuit)
    if garbled.instances != n or ot_batch != ot_tag.batch:
        raise CircuitError("Garbled batch does not line up with the evaluator's chunk")
    n_garbler = 2 + len(circuit.garbler_inputs)
    garbler_labels = unpack_labels(session.recv_bytes(MessageType.GC_BLOB))
    if len(garbler_labels) != n * n_garbler:
        raise CircuitError("Garbler label count mismatch")

    choice = bits.reshape(-1)
    blinded = np.packbits(receiver_mask_choices(ot_corr, choice))
    session.send_bytes(MessageType.OT_BLOCK, blinded.tobytes())
    own_labels = receiver_finish(
        ot_corr, choice, unpack_labels(session.recv_bytes(MessageType.OT_BLOCK))
    )

    outputs = []
    for i in range(n):
        outputs += evaluate(
            circuit,
            garbled,
            i,
            garbler_labels[i * n_garbler : (i + 1) * n_garbler],
            own_labels[i * n_eval : (i + 1) * n_eval],
        )
    session.send_bytes(MessageType.GC_BLOB, pack_labels(outputs))
    return masks
