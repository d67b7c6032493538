"""
Fixed-point quantization, synthetic weights and the static headroom check
"""

import math
from dataclasses import dataclass
from typing import Dict, List, Mapping, Optional, Tuple

import numpy as np
from pydantic import BaseModel

from src.mpc.truncation import truncation_bound
from src.protocols.conv import ConvWeights
from src.unet.spec import LayerKind, LayerSpec, NetworkSpec, PoolKind
from src.utils.errors import QuantizationError, QuantizationOverflowError
from src.utils.logger import get_logger
from src.utils.settings import TruncationMode

logger = get_logger(__name__)

NetworkWeights = Dict[str, ConvWeights]


@dataclass(frozen=True)
class QuantTensor:
    """Signed integers with an implied scale of 2^-scale_bits"""

    values: np.ndarray
    scale_bits: int = 0

    def __post_init__(self) -> None:
        object.__setattr__(self, "values", np.asarray(self.values, dtype=np.int64))

    @property
    def shape(self) -> Tuple[int, ...]:
        return tuple(self.values.shape)

    def dequantize(self) -> np.ndarray:
        return self.values.astype(np.float64) / float(1 << self.scale_bits)

    def check(self, bits: int, name: str = "tensor") -> None:
        """Raise when any |value| needs more than `bits` signed bits"""
        limit = 1 << (bits - 1)
        peak = int(np.abs(self.values).max()) if self.values.size else 0
        if peak >= limit:
            raise QuantizationOverflowError(name, peak, limit)

    def residues(self, p: int) -> np.ndarray:
        return np.mod(self.values, p).astype(np.uint64)


def quantize_weights(
    x: np.ndarray, bits: int, frac_bits: int, name: str = "weights"
) -> QuantTensor:
    """
    Round-to-nearest fixed point at scale 2^-frac_bits

    Raises:
        QuantizationOverflowError: a rounded value does not fit `bits` signed bits
    """
    x = np.asarray(x, dtype=np.float64)
    if not np.all(np.isfinite(x)):
        raise QuantizationError(f"{name} holds non-finite values")
    q = QuantTensor(np.rint(x * float(1 << frac_bits)).astype(np.int64), frac_bits)
    q.check(bits, name)
    return q


def dequantize(q: QuantTensor) -> np.ndarray:
    return q.dequantize()


def fit_frac_bits(x: np.ndarray, bits: int) -> int:
    """Largest fraction width that keeps max|x| inside `bits` signed bits"""
    peak = float(np.abs(np.asarray(x, dtype=np.float64)).max(initial=0.0))
    if peak == 0.0:
        return bits - 1
    limit = (1 << (bits - 1)) - 1
    frac = int(math.floor(math.log2(limit / peak)))
    while frac > -64 and round(peak * 2.0**frac) > limit:
        frac -= 1
    return frac


def fold_batch_norm(
    kernel: np.ndarray,
    bias: Optional[np.ndarray],
    gamma: np.ndarray,
    beta: np.ndarray,
    mean: np.ndarray,
    var: np.ndarray,
    eps: float = 1e-5,
) -> Tuple[np.ndarray, np.ndarray]:
    """
    Fold an inference-time normalization into the conv that feeds it

    y = gamma * (conv(x) + b - mean) / sqrt(var + eps) + beta
    """
    kernel = np.asarray(kernel, dtype=np.float64)
    scale = np.asarray(gamma, dtype=np.float64) / np.sqrt(np.asarray(var, dtype=np.float64) + eps)
    if scale.shape != (kernel.shape[0],):
        raise QuantizationError(
            f"Normalization has {scale.shape} channels for {kernel.shape[0]} filters"
        )
    base = np.zeros(kernel.shape[0]) if bias is None else np.asarray(bias, dtype=np.float64)
    folded = kernel * scale.reshape((-1,) + (1,) * (kernel.ndim - 1))
    return folded, (base - np.asarray(mean, dtype=np.float64)) * scale + np.asarray(beta)


def quantize_float_model(
    spec: NetworkSpec,
    float_weights: Mapping[str, Tuple[np.ndarray, Optional[np.ndarray]]],
    input_frac_bits: int = 0,
) -> NetworkWeights:
    """
    Quantize a float (kernel, bias) per conv layer

    Each kernel gets the widest fraction that fits b_w bits. Biases live at
    the accumulator scale, i.e. kernel fraction plus input fraction.

    Raises:
        QuantizationError: a conv layer has no float weights or the wrong shape
    """
    out: NetworkWeights = {}
    bits = spec.quant.weight_bits
    for layer in spec.of_kind(LayerKind.CONV, LayerKind.TRANSPOSED_CONV):
        if layer.name not in float_weights:
            raise QuantizationError(f"No float weights for layer '{layer.name}'")
        kernel, bias = float_weights[layer.name]
        expected = kernel_shape(layer)
        if tuple(np.shape(kernel)) != expected:
            raise QuantizationError(
                f"Layer '{layer.name}' kernel is {np.shape(kernel)}, expected {expected}"
            )
        frac = fit_frac_bits(kernel, bits)
        qk = quantize_weights(kernel, bits, frac, layer.name)
        qb = None
        if bias is not None:
            qb = np.rint(np.asarray(bias) * 2.0 ** (frac + input_frac_bits)).astype(np.int64)
        out[layer.name] = ConvWeights(qk.values, qb)
        logger.debug(f"Quantized {layer.name} at 2^-{frac}")
    return out


def kernel_shape(layer: LayerSpec) -> Tuple[int, ...]:
    """(C_out, C_in, kd, kh, kw) of a conv layer"""
    return (layer.out_dims[0], layer.in_dims[0]) + tuple(layer.kernel or ())


def gen_synthetic_weights(spec: NetworkSpec, seed: int) -> NetworkWeights:
    """Deterministic bounded integer filters for every conv layer"""
    rng = np.random.default_rng(seed)
    bound = spec.quant.weight_max
    out: NetworkWeights = {}
    for layer in spec.of_kind(LayerKind.CONV, LayerKind.TRANSPOSED_CONV):
        kernel = rng.integers(-bound, bound + 1, size=kernel_shape(layer), dtype=np.int64)
        bias = None
        if layer.bias:
            bias = rng.integers(-bound, bound + 1, size=layer.out_dims[0], dtype=np.int64)
        out[layer.name] = ConvWeights(kernel, bias)
    return out


def gen_synthetic_input(spec: NetworkSpec, seed: int) -> np.ndarray:
    """Non-negative image intensities below 2^(b_a - 1)"""
    rng = np.random.default_rng(seed)
    return rng.integers(0, spec.quant.activation_limit, size=spec.input_dims, dtype=np.int64)


def check_weights(spec: NetworkSpec, weights: Mapping[str, ConvWeights]) -> None:
    """
    Raises:
        QuantizationError: a filter bank is missing or has the wrong shape
        QuantizationOverflowError: a weight exceeds b_w bits
    """
    for layer in spec.of_kind(LayerKind.CONV, LayerKind.TRANSPOSED_CONV):
        w = weights.get(layer.name)
        if w is None:
            raise QuantizationError(f"No weights for layer '{layer.name}'")
        if tuple(w.kernel.shape) != kernel_shape(layer):
            raise QuantizationError(
                f"Layer '{layer.name}' kernel is {w.kernel.shape}, expected {kernel_shape(layer)}"
            )
        QuantTensor(w.kernel).check(spec.quant.weight_bits, layer.name)


def calibrate_shifts(
    spec: NetworkSpec, weights: Mapping[str, ConvWeights], sample: np.ndarray
) -> NetworkSpec:
    """
    Smallest shift per layer that brings the sample's activations under 2^(b_a - 1)

    Convolutions and activations get a shift; quantize shifts are kept as
    given. Average pooling never divides, so the next conv shift absorbs the
    window sum.
    """
    from src.unet.oracle import LayerState, apply_layer

    limit = spec.quant.activation_limit
    shifts: Dict[str, int] = {}
    state = LayerState(np.asarray(sample, dtype=np.int64))
    for layer in spec.layers:
        if layer.kind in (LayerKind.CONV, LayerKind.TRANSPOSED_CONV, LayerKind.ACTIVATION):
            raw = apply_layer(layer.model_copy(update={"shift": 0}), state, weights)
            peak = int(np.abs(raw).max()) if raw.size else 0
            shift = max(0, peak.bit_length() - (spec.quant.activation_bits - 1))
            while raw.size and int(np.abs(raw >> shift).max()) >= limit:
                shift += 1
            shifts[layer.name] = shift
            layer = layer.model_copy(update={"shift": shift})
        state.x = apply_layer(layer, state, weights)
    calibrated = spec.with_shifts(shifts)
    logger.info(f"Calibrated {len(shifts)} shifts for {spec.name}")
    return calibrated


class HeadroomRow(BaseModel):
    layer: str
    bits: float
    limit: float
    ok: bool


def analyze_headroom(
    spec: NetworkSpec, p: int, mode: TruncationMode = TruncationMode.EXACT
) -> List[HeadroomRow]:
    """
    Worst-case accumulator width of every conv against the modulus

    An accumulator needs (b_a - 1) + (b_w - 1) + lg(taps * C_in) bits plus one
    for the sign; avg-pool inputs add lg(window) and a bias adds one bit. In
    probabilistic mode the limit is the truncation bound instead of p/2.
    """
    rows: List[HeadroomRow] = []
    growth = 0.0
    exact_limit = math.log2(p) - 1 - spec.quant.margin
    for layer in spec.layers:
        if layer.kind == LayerKind.POOL and layer.pool == PoolKind.AVG:
            growth = math.log2(int(np.prod(layer.window)))
            continue
        if layer.kind not in (LayerKind.CONV, LayerKind.TRANSPOSED_CONV):
            continue
        taps = int(np.prod(layer.kernel)) * layer.in_dims[0]
        bits = (
            (spec.quant.activation_bits - 1)
            + (spec.quant.weight_bits - 1)
            + math.log2(taps)
            + growth
            + (1 if layer.bias else 0)
        )
        limit = exact_limit
        if mode == TruncationMode.PROBABILISTIC and layer.shift:
            limit = min(limit, math.log2(truncation_bound(p, layer.shift, spec.quant.margin)))
        rows.append(
            HeadroomRow(
                layer=layer.name, bits=round(bits, 3), limit=round(limit, 3), ok=bits <= limit
            )
        )
        growth = 0.0
    return rows


def check_headroom(
    spec: NetworkSpec, p: int, mode: TruncationMode = TruncationMode.EXACT
) -> List[HeadroomRow]:
    """
    Raises:
        QuantizationError: some conv can overflow in the worst case
    """
    rows = analyze_headroom(spec, p, mode)
    bad = [row for row in rows if not row.ok]
    if bad:
        first = bad[0]
        raise QuantizationError(
            f"{len(bad)} layers exceed the modulus headroom, first '{first.layer}' "
            f"needs {first.bits} bits of {first.limit}"
        )
    return rows
