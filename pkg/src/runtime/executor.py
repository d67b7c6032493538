"""
Secure inference driver for one party

Both parties walk the same schedule: setup (handshake, evaluation keys),
the layer steps with a transcript checkpoint at every layer-batch
boundary, then the argmax readout bracketed by two more checkpoints.
Any failure aborts the session so the peer stops instead of blocking.
"""

import hashlib
import json
from dataclasses import dataclass, field
from typing import Dict, List, Mapping, Optional, Tuple

import numpy as np

from src.mpc.sharing import Party, ShareVector
from src.protocols.activation import relu, rescale, square
from src.protocols.conv import ConvWeights, hom_conv, transposed_conv
from src.protocols.layout import TensorLayout
from src.protocols.pooling import avg_pool_shares, max_pool
from src.protocols.readout import concat, readout_argmax
from src.runtime.schedule import Step, StepKind, build_schedule
from src.runtime.session import PROTOCOL_VERSION, Phase, Session
from src.runtime.timing import Primitive, TimingReport, timing_report
from src.unet.quant import check_weights
from src.unet.spec import NetworkSpec
from src.utils.errors import ProtocolError, QuantizationError
from src.utils.settings import Settings, TruncationMode


@dataclass
class InferenceResult:
    """What a party holds after a completed run; Bob's labels are None"""

    party: Party
    labels: Optional[np.ndarray]
    transcript: str
    report: TimingReport
    trace: List[Tuple[str, ShareVector]] = field(default_factory=list)


def session_fingerprint(spec: NetworkSpec, mode: TruncationMode, settings: Settings) -> str:
    """Spec hash for the handshake; covers every knob that shapes the transcript"""
    knobs = {
        "spec": spec.fingerprint(),
        "mode": mode.value,
        "flood_bits": settings.flood_bits,
        "gc_chunk": settings.gc_chunk,
        "checkpoints": settings.checkpoint_every_batch,
        "version": PROTOCOL_VERSION,
    }
    return hashlib.sha256(json.dumps(knobs, sort_keys=True).encode()).hexdigest()


def _initial_share(
    session: Session, spec: NetworkSpec, image: Optional[np.ndarray]
) -> ShareVector:
    p = session.params.p
    layout = TensorLayout.of(spec.input_dims)
    if session.party is Party.BOB:
        return ShareVector.zeros(layout.size, p, session.party, layout)
    if image is None:
        raise ProtocolError("Alice needs the input image")
    image = np.asarray(image, dtype=np.int64)
    if tuple(image.shape) != spec.input_dims:
        raise QuantizationError(f"Input shape {image.shape} does not match {spec.input_dims}")
    return ShareVector.from_ints(layout.raster(image), p, session.party, layout)


def _run_step(
    session: Session,
    step: Step,
    x: ShareVector,
    skips: Dict[str, ShareVector],
    weights: Optional[Mapping[str, ConvWeights]],
    mode: TruncationMode,
    margin: int,
) -> ShareVector:
    layer = step.layer
    kind = step.kind
    own = weights.get(layer.name) if weights is not None else None
    if kind == StepKind.CONV:
        return hom_conv(session, x, step.conv_plan, own, step.fresh_input)  # type: ignore[arg-type]
    if kind == StepKind.TRANSPOSED_CONV:
        return transposed_conv(
            session, x, step.conv_plan, layer.stride, own  # type: ignore[arg-type]
        )
    if kind == StepKind.RELU:
        return relu(session, x, step.shift)
    if kind == StepKind.SQUARE:
        return square(session, x, step.pre_shift, step.shift, mode, margin)
    if kind == StepKind.RESCALE:
        return rescale(session, x, step.shift, mode, margin)
    if kind == StepKind.AVG_POOL:
        return avg_pool_shares(session, x, step.pool_plan)  # type: ignore[arg-type]
    if kind == StepKind.MAX_POOL:
        return max_pool(session, x, layer.window)  # type: ignore[arg-type]
    if kind == StepKind.SKIP_SAVE:
        skips[layer.name] = x
        return x
    if kind == StepKind.CONCAT:
        return concat(x, skips.pop(layer.source))  # type: ignore[arg-type]
    raise ProtocolError(f"Step {kind.value} has no layer protocol")


def _run(
    session: Session,
    spec: NetworkSpec,
    mode: TruncationMode,
    image: Optional[np.ndarray],
    weights: Optional[Mapping[str, ConvWeights]],
    steps: Optional[List[Step]],
) -> InferenceResult:
    if session.party is Party.BOB:
        if weights is None:
            raise ProtocolError("Bob needs the network weights")
        check_weights(spec, weights)
    steps = steps or build_schedule(spec, session.params, session.settings.flood_bits)
    margin = spec.quant.margin

    with session.primitive(Primitive.SETUP):
        session.handshake()
        session.exchange_keys()
    session.advance(Phase.LAYERS)

    x = _initial_share(session, spec, image)
    skips: Dict[str, ShareVector] = {}
    session.ledger.batch = steps[0].batch
    readout: Optional[Step] = None
    for step in steps:
        if step.batch != session.ledger.batch:
            if session.settings.checkpoint_every_batch:
                session.checkpoint(f"batch-{session.ledger.batch}")
            session.ledger.batch = step.batch
        if step.kind == StepKind.ARGMAX:
            readout = step
            break
        x = _run_step(session, step, x, skips, weights, mode, margin)
        for name in step.records:
            session.record(name, x)
        session.log.debug(f"{step.kind.value} {step.layer.name} done")

    if readout is None:
        raise ProtocolError("Schedule has no readout step")
    session.checkpoint("pre-readout")
    session.advance(Phase.READOUT)
    labels = readout_argmax(session, x)
    session.checkpoint("post-readout")
    session.advance(Phase.DONE)

    transcript = session.transcript_digest()
    report = timing_report(
        session.ledger,
        session.party.value,
        metadata={
            "spec": spec.name,
            "spec_hash": session.spec_hash,
            "variant": spec.variant.value,
            "truncation": mode.value,
            "params_hash": session.params.fingerprint(),
            "n": session.params.n,
            "p": session.params.p,
            "transcript": transcript,
        },
    )
    session.log.info(
        f"Inference done in {report.total_seconds:.2f}s, "
        f"{report.bytes_sent:,} bytes sent, {report.bytes_received:,} received"
    )
    return InferenceResult(session.party, labels, transcript, report, list(session.trace))


def run_secure_inference(
    session: Session,
    spec: NetworkSpec,
    mode: Optional[TruncationMode] = None,
    image: Optional[np.ndarray] = None,
    weights: Optional[Mapping[str, ConvWeights]] = None,
    steps: Optional[List[Step]] = None,
) -> InferenceResult:
    """
    Run one party's side of the blind segmentation

    Args:
        session: Fresh session of this party
        spec: Calibrated architecture both parties agreed on
        mode: Truncation mode (defaults to the session settings)
        image: Alice's (C, D, H, W) input
        weights: Bob's filter banks by layer name
        steps: Precomputed schedule (built from spec when omitted)

    Returns:
        Alice's label map and timing report; Bob's completion receipt

    Raises:
        HandshakeError: the peer runs another spec, parameter set or dealer
        TranscriptMismatchError: a frame changed in transit
        SessionAbortedError: the peer aborted
    """
    mode = mode or session.settings.truncation_mode
    try:
        return _run(session, spec, mode, image, weights, steps)
    except Exception as e:
        session.abort(f"{type(e).__name__}: {e}")
        raise
    finally:
        session.close()
