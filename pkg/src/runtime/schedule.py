"""
Layer schedule shared by the executor and the correlation planner

The schedule turns the layer list into protocol steps. A conv feeding an
activation hands its shift to that activation, and a quantize layer right
after an activation is folded into the activation's rescale, so the ReLU
path truncates exactly once inside its garbled circuit.
"""

from dataclasses import dataclass
from enum import Enum
from typing import Dict, List, Optional, Tuple

import numpy as np

from src.gc.circuits import bit_width
from src.mpc.dealer import CorrelationKind
from src.protocols.activation import ActivationKind
from src.protocols.conv import plan_transposed_conv
from src.protocols.conv_plan import ConvPlan, plan_conv, same_padding
from src.protocols.layout import TensorLayout
from src.protocols.pooling import PoolPlan, plan_pool
from src.ring.params import RingParams
from src.unet.spec import (
    LayerKind,
    LayerSpec,
    NetworkSpec,
    PoolKind,
    fused_with_next_activation,
    fused_with_previous_activation,
)
from src.utils.errors import SpecError
from src.utils.logger import get_logger
from src.utils.settings import TruncationMode

logger = get_logger(__name__)


class StepKind(str, Enum):
    CONV = "conv"
    TRANSPOSED_CONV = "transposed_conv"
    RELU = "relu"
    SQUARE = "square"
    RESCALE = "rescale"
    AVG_POOL = "avg_pool"
    MAX_POOL = "max_pool"
    SKIP_SAVE = "skip_save"
    CONCAT = "concat"
    ARGMAX = "argmax"


@dataclass(frozen=True)
class Step:
    """
    One protocol invocation

    `records` names the layers whose plaintext output equals this step's
    output, for trace comparison.
    """

    kind: StepKind
    layer: LayerSpec
    shift: int = 0
    pre_shift: int = 0
    conv_plan: Optional[ConvPlan] = None
    pool_plan: Optional[PoolPlan] = None
    fresh_input: bool = False
    records: Tuple[str, ...] = ()

    @property
    def batch(self) -> int:
        return self.layer.batch


def _activation_steps(spec: NetworkSpec, index: int, pre_shift: int) -> Tuple[Step, int]:
    """Step for the activation at index plus how many layers it consumed"""
    act = spec.layers[index]
    post = act.shift
    records: Tuple[str, ...] = (act.name,)
    consumed = 1
    if index + 1 < len(spec.layers) and fused_with_previous_activation(spec, index + 1):
        quant = spec.layers[index + 1]
        post += quant.shift
        records = (quant.name,)
        consumed = 2
    if act.activation == ActivationKind.RELU:
        return Step(StepKind.RELU, act, shift=pre_shift + post, records=records), consumed
    return Step(StepKind.SQUARE, act, shift=post, pre_shift=pre_shift, records=records), consumed


def _conv_plan(layer: LayerSpec, params: RingParams, weight_bits: int, flood_bits: int) -> ConvPlan:
    layout = TensorLayout.of(layer.in_dims)
    if layer.kind == LayerKind.TRANSPOSED_CONV:
        return plan_transposed_conv(
            layout,
            layer.out_channels,
            layer.kernel,  # type: ignore[arg-type]
            layer.stride,  # type: ignore[arg-type]
            params,
            weight_bits,
            flood_bits,
        )
    return plan_conv(
        layout,
        layer.out_channels,
        layer.kernel,  # type: ignore[arg-type]
        same_padding(layer.kernel),  # type: ignore[arg-type]
        params,
        weight_bits,
        flood_bits,
    )


def _pool_plan(layer: LayerSpec, params: RingParams) -> PoolPlan:
    window = layer.window
    return plan_pool(TensorLayout.of(layer.in_dims), window, params.n)  # type: ignore[arg-type]


def build_schedule(spec: NetworkSpec, params: RingParams, flood_bits: int) -> List[Step]:
    """
    Protocol steps for one inference

    Raises:
        LayoutError: a layer does not fit the ring
        NoiseBudgetError: a conv cannot be evaluated within the noise budget
    """
    steps: List[Step] = []
    layers = spec.layers
    wbits = spec.quant.weight_bits
    i = 0
    while i < len(layers):
        layer = layers[i]
        kind = layer.kind
        if kind in (LayerKind.CONV, LayerKind.TRANSPOSED_CONV):
            step_kind = StepKind.CONV if kind == LayerKind.CONV else StepKind.TRANSPOSED_CONV
            plan = _conv_plan(layer, params, wbits, flood_bits)
            fresh = i == 0 and kind == LayerKind.CONV
            if fused_with_next_activation(spec, i):
                steps.append(Step(step_kind, layer, conv_plan=plan, fresh_input=fresh))
                act_step, consumed = _activation_steps(spec, i + 1, layer.shift)
                steps.append(act_step)
                i += 1 + consumed
                continue
            if layer.shift:
                steps.append(Step(step_kind, layer, conv_plan=plan, fresh_input=fresh))
                steps.append(
                    Step(StepKind.RESCALE, layer, shift=layer.shift, records=(layer.name,))
                )
            else:
                steps.append(
                    Step(step_kind, layer, conv_plan=plan, fresh_input=fresh, records=(layer.name,))
                )
        elif kind == LayerKind.ACTIVATION:
            act_step, consumed = _activation_steps(spec, i, 0)
            steps.append(act_step)
            i += consumed
            continue
        elif kind == LayerKind.QUANTIZE:
            steps.append(Step(StepKind.RESCALE, layer, shift=layer.shift, records=(layer.name,)))
        elif kind == LayerKind.POOL:
            if layer.pool == PoolKind.AVG:
                pool = _pool_plan(layer, params)
                steps.append(
                    Step(StepKind.AVG_POOL, layer, pool_plan=pool, records=(layer.name,))
                )
            else:
                steps.append(Step(StepKind.MAX_POOL, layer, records=(layer.name,)))
        elif kind == LayerKind.CONCAT_SOURCE:
            steps.append(Step(StepKind.SKIP_SAVE, layer, records=(layer.name,)))
        elif kind == LayerKind.CONCAT_SINK:
            steps.append(Step(StepKind.CONCAT, layer, records=(layer.name,)))
        elif kind == LayerKind.ARGMAX:
            steps.append(Step(StepKind.ARGMAX, layer))
        else:
            raise SpecError(f"No protocol for layer kind {kind}")
        i += 1
    return steps


def _truncation(counts: Dict[CorrelationKind, int], n: int, k: int, mode: TruncationMode) -> None:
    if mode == TruncationMode.EXACT:
        counts[CorrelationKind.OT] += n * 2 * k
        counts[CorrelationKind.GC_MASK] += n
    else:
        counts[CorrelationKind.TRUNC_PAIR] += n


def schedule_correlations(
    steps: List[Step], p: int, mode: TruncationMode
) -> Dict[CorrelationKind, int]:
    """Elements of every correlation kind one run of the steps draws"""
    k = bit_width(p)
    counts = {kind: 0 for kind in CorrelationKind}
    for step in steps:
        n = step.layer.volume
        if step.kind == StepKind.RELU:
            counts[CorrelationKind.OT] += n * 2 * k
            counts[CorrelationKind.GC_MASK] += n
        elif step.kind == StepKind.SQUARE:
            if step.pre_shift:
                _truncation(counts, n, k, mode)
            counts[CorrelationKind.TRIPLE] += n
            if step.shift:
                _truncation(counts, n, k, mode)
        elif step.kind == StepKind.RESCALE and step.shift:
            _truncation(counts, n, k, mode)
        elif step.kind == StepKind.MAX_POOL:
            window = int(np.prod(step.layer.window))
            counts[CorrelationKind.OT] += n * (window * k + k)
            counts[CorrelationKind.GC_MASK] += n
        elif step.kind == StepKind.ARGMAX:
            counts[CorrelationKind.OT] += n * step.layer.in_dims[0] * k
    return counts


def plan_correlations(
    spec: NetworkSpec, params: RingParams, mode: TruncationMode, flood_bits: int = 24
) -> Dict[CorrelationKind, int]:
    """Exact per-kind correlation counts of one inference; tapes use them as limits"""
    counts = schedule_correlations(build_schedule(spec, params, flood_bits), params.p, mode)
    logger.debug(
        "Correlation plan: " + ", ".join(f"{k.value}={v:,}" for k, v in counts.items())
    )
    return counts


def rotation_steps_for(spec: NetworkSpec, params: RingParams) -> List[int]:
    """Rotation offsets every average-pooling layer of the spec needs"""
    steps = set()
    for layer in spec.of_kind(LayerKind.POOL):
        if layer.pool == PoolKind.AVG:
            steps.update(_pool_plan(layer, params).rotation_steps())
    return sorted(steps)
