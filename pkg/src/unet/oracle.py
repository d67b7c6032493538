"""
Plaintext quantized reference inference

Pure int64 arithmetic with the same floor shifts, fusion points and
tie-breaking as the two-party pipeline. In exact truncation mode its label
map is the ground truth the secure run must reproduce bit for bit.

Probabilistic truncation adds a carry in {0, 1} after every dealer-pair
shift. Given the dealer seed the oracle replays those carries and again
matches the secure run exactly; `oracle_bounds` instead brackets every
layer between the exact value and the value with all carries set.
"""

import itertools
from dataclasses import dataclass, field
from typing import Dict, Mapping, Optional, Sequence, Tuple, Union

import numpy as np

from src.mpc.dealer import DealerTape
from src.mpc.sharing import Party
from src.mpc.truncation import truncation_bound
from src.protocols.activation import ActivationKind
from src.protocols.conv import ConvWeights
from src.protocols.conv_plan import same_padding
from src.ring.modarith import add_mod
from src.unet.quant import QuantTensor
from src.unet.spec import (
    LayerKind,
    LayerSpec,
    NetworkSpec,
    PoolKind,
    fused_with_next_activation,
    fused_with_previous_activation,
)
from src.utils.errors import QuantizationError, QuantizationOverflowError, TruncationBoundError
from src.utils.logger import get_logger
from src.utils.settings import TruncationMode

logger = get_logger(__name__)

SHIFTING = (LayerKind.CONV, LayerKind.TRANSPOSED_CONV, LayerKind.ACTIVATION, LayerKind.QUANTIZE)
CHECKED = (LayerKind.CONV, LayerKind.TRANSPOSED_CONV, LayerKind.ACTIVATION, LayerKind.POOL)


def floor_shift(x: np.ndarray, shift: int) -> np.ndarray:
    """floor(x / 2^shift) on signed integers"""
    return x >> shift if shift else x


def conv_reference(
    x: np.ndarray, kernel: np.ndarray, padding: Sequence[Sequence[int]]
) -> np.ndarray:
    """Direct stride-1 cross-correlation of a (C, D, H, W) tensor"""
    _, _, kd, kh, kw = kernel.shape
    xp = np.pad(x.astype(np.int64), ((0, 0),) + tuple(tuple(p) for p in padding))
    d = xp.shape[1] - kd + 1
    h = xp.shape[2] - kh + 1
    w = xp.shape[3] - kw + 1
    out = np.zeros((kernel.shape[0], d, h, w), dtype=np.int64)
    for a, b, c in itertools.product(range(kd), range(kh), range(kw)):
        window = xp[:, a : a + d, b : b + h, c : c + w]
        out += np.einsum("oi,idhw->odhw", kernel[:, :, a, b, c].astype(np.int64), window)
    return out


def transposed_conv_reference(
    x: np.ndarray, kernel: np.ndarray, stride: Sequence[int]
) -> np.ndarray:
    """Direct transposed convolution: every input voxel scatters one kernel copy"""
    _, _, kd, kh, kw = kernel.shape
    sd, sh, sw = stride
    _, d, h, w = x.shape
    out = np.zeros(
        (kernel.shape[0], sd * (d - 1) + kd, sh * (h - 1) + kh, sw * (w - 1) + kw), dtype=np.int64
    )
    x = x.astype(np.int64)
    for a, b, c in itertools.product(range(kd), range(kh), range(kw)):
        taps = np.einsum("oi,idhw->odhw", kernel[:, :, a, b, c].astype(np.int64), x)
        out[:, a :: sd, b :: sh, c :: sw][:, :d, :h, :w] += taps
    return out


def _windows(x: np.ndarray, window: Sequence[int]) -> np.ndarray:
    c, d, h, w = x.shape
    zd, zh, zw = window
    return x.reshape(c, d // zd, zd, h // zh, zh, w // zw, zw)


def window_sum(x: np.ndarray, window: Sequence[int]) -> np.ndarray:
    return _windows(x, window).sum(axis=(2, 4, 6))


def window_max(x: np.ndarray, window: Sequence[int]) -> np.ndarray:
    return _windows(x, window).max(axis=(2, 4, 6))


@dataclass
class LayerState:
    """Current tensor plus the skip tensors saved so far"""

    x: np.ndarray
    skips: Dict[str, np.ndarray] = field(default_factory=dict)


def pre_shift(
    layer: LayerSpec, state: LayerState, weights: Mapping[str, ConvWeights]
) -> np.ndarray:
    """Layer output before its own requantization shift"""
    x = state.x
    kind = layer.kind
    if kind in (LayerKind.CONV, LayerKind.TRANSPOSED_CONV):
        w = weights[layer.name]
        if kind == LayerKind.CONV:
            acc = conv_reference(x, w.kernel, same_padding(layer.kernel))  # type: ignore[arg-type]
        else:
            acc = transposed_conv_reference(x, w.kernel, layer.stride)  # type: ignore[arg-type]
        if w.bias is not None:
            acc = acc + w.bias.astype(np.int64).reshape(-1, 1, 1, 1)
        return acc
    if kind == LayerKind.ACTIVATION:
        if layer.activation == ActivationKind.SQUARE:
            return x * x
        return np.maximum(x, 0)
    if kind == LayerKind.POOL:
        if layer.pool == PoolKind.MAX:
            return window_max(x, layer.window)  # type: ignore[arg-type]
        return window_sum(x, layer.window)  # type: ignore[arg-type]
    if kind == LayerKind.CONCAT_SOURCE:
        state.skips[layer.name] = x
        return x
    if kind == LayerKind.CONCAT_SINK:
        return np.concatenate([x, state.skips[layer.source]], axis=0)  # type: ignore[index]
    if kind == LayerKind.ARGMAX:
        return np.argmax(x, axis=0)[None].astype(np.int64)
    return x


def apply_layer(
    layer: LayerSpec, state: LayerState, weights: Mapping[str, ConvWeights]
) -> np.ndarray:
    raw = pre_shift(layer, state, weights)
    if layer.kind in SHIFTING:
        return floor_shift(raw, layer.shift)
    return raw


@dataclass
class OracleResult:
    labels: np.ndarray
    intermediates: Dict[str, np.ndarray]

    @property
    def logits(self) -> np.ndarray:
        return list(self.intermediates.values())[-2]


def _check_overflow(layer: LayerSpec, raw: np.ndarray, p: int) -> None:
    peak = int(np.abs(raw).max()) if raw.size else 0
    limit = (p - 1) // 2
    if peak > limit:
        raise QuantizationOverflowError(layer.name, peak, limit)


def _probabilistic_shift(spec: NetworkSpec, index: int) -> int:
    """Bits the secure run drops with a dealer pair right after this layer, or 0"""
    layer = spec.layers[index]
    if layer.kind in (LayerKind.CONV, LayerKind.TRANSPOSED_CONV):
        return 0 if _feeds_relu(spec, index) else layer.shift
    if layer.kind == LayerKind.ACTIVATION and layer.activation == ActivationKind.SQUARE:
        following = index + 1 < len(spec.layers) and fused_with_previous_activation(spec, index + 1)
        return layer.shift + (spec.layers[index + 1].shift if following else 0)
    if layer.kind == LayerKind.QUANTIZE and not fused_with_previous_activation(spec, index):
        return layer.shift
    return 0


def _feeds_relu(spec: NetworkSpec, index: int) -> bool:
    return (
        fused_with_next_activation(spec, index)
        and spec.layers[index + 1].activation == ActivationKind.RELU
    )

def _carry_index(spec: NetworkSpec, index: int) -> int:
    """Layer whose output receives the carry of a truncation drawn at index"""
    if spec.layers[index].kind == LayerKind.ACTIVATION and (
        index + 1 < len(spec.layers) and fused_with_previous_activation(spec, index + 1)
    ):
        return index + 1
    return index


class CarryReplay:
    """
    Plaintext replay of the dealer's truncation pairs

    Draws the pairs in the order the secure run does and returns the carry
    out of the low bits of v + r for every element.
    """

    def __init__(self, dealer_seed: int, p: int, margin: int):
        self.p = p
        self.margin = margin
        self.tapes = tuple(DealerTape(dealer_seed, party, p) for party in (Party.ALICE, Party.BOB))

    def carries(self, v: np.ndarray, shift: int) -> np.ndarray:
        bound = truncation_bound(self.p, shift, self.margin)
        alice, bob = (tape.trunc_pairs(v.size, shift, bound) for tape in self.tapes)
        r = add_mod(alice.r, bob.r, self.p).astype(np.int64)
        low = (1 << shift) - 1
        return (((v.reshape(-1) & low) + (r & low)) >> shift).reshape(v.shape)


def oracle_infer(
    spec: NetworkSpec,
    weights: Mapping[str, ConvWeights],
    image: Union[np.ndarray, QuantTensor],
    p: int,
    mode: TruncationMode = TruncationMode.EXACT,
    dealer_seed: Optional[int] = None,
) -> OracleResult:
    """
    Run the quantized network in the clear

    Args:
        spec: Validated architecture with calibrated shifts
        weights: Filter bank per conv layer
        image: (C, D, H, W) signed input
        p: Plaintext modulus the secure run shares over
        mode: PROBABILISTIC additionally enforces the truncation bound
        dealer_seed: With PROBABILISTIC, replay this dealer's carries

    Raises:
        QuantizationOverflowError: a value leaves the signed range of p
        TruncationBoundError: a probabilistically truncated value reaches the bound
    """
    x = image.values if isinstance(image, QuantTensor) else np.asarray(image, dtype=np.int64)
    if tuple(x.shape) != spec.input_dims:
        raise QuantizationError(f"Input shape {x.shape} does not match {spec.input_dims}")
    replay = None
    if mode == TruncationMode.PROBABILISTIC and dealer_seed is not None:
        replay = CarryReplay(dealer_seed, p, spec.quant.margin)
    state = LayerState(x)
    _check_overflow(spec.layers[0], x, p)
    intermediates: Dict[str, np.ndarray] = {}
    pending: Dict[int, np.ndarray] = {}
    for i, layer in enumerate(spec.layers):
        raw = pre_shift(layer, state, weights)
        if layer.kind in CHECKED:
            _check_overflow(layer, raw, p)
        if mode == TruncationMode.PROBABILISTIC:
            shift = _probabilistic_shift(spec, i)
            if shift:
                bound = truncation_bound(p, shift, spec.quant.margin)
                peak = int(np.abs(raw).max()) if raw.size else 0
                if peak >= bound:
                    raise TruncationBoundError(layer.name, peak, bound)
                if replay is not None:
                    pending[_carry_index(spec, i)] = replay.carries(raw, shift)
        state.x = floor_shift(raw, layer.shift) if layer.kind in SHIFTING else raw
        if i in pending:
            state.x = state.x + pending.pop(i)
        intermediates[layer.name] = state.x
    labels = state.x[0]
    logger.debug(f"Oracle ran {len(spec.layers)} layers of {spec.name}")
    return OracleResult(labels=labels, intermediates=intermediates)


Bounds = Dict[str, Tuple[np.ndarray, np.ndarray]]


def _split_weights(w: ConvWeights) -> Tuple[ConvWeights, ConvWeights]:
    return ConvWeights(np.maximum(w.kernel, 0), w.bias), ConvWeights(np.minimum(w.kernel, 0))


def _interval(
    layer: LayerSpec, lo: LayerState, hi: LayerState, weights: Mapping[str, ConvWeights]
) -> Tuple[np.ndarray, np.ndarray]:
    if layer.kind in (LayerKind.CONV, LayerKind.TRANSPOSED_CONV):
        pos, neg = _split_weights(weights[layer.name])
        plus, minus = {layer.name: pos}, {layer.name: neg}
        return (
            pre_shift(layer, lo, plus) + pre_shift(layer, hi, minus),
            pre_shift(layer, hi, plus) + pre_shift(layer, lo, minus),
        )
    if layer.kind == LayerKind.ACTIVATION and layer.activation == ActivationKind.SQUARE:
        a2, b2 = lo.x * lo.x, hi.x * hi.x
        straddles = (lo.x <= 0) & (hi.x >= 0)
        return np.where(straddles, 0, np.minimum(a2, b2)), np.maximum(a2, b2)
    # every other layer is monotone in its input
    return pre_shift(layer, lo, weights), pre_shift(layer, hi, weights)


def oracle_bounds(
    spec: NetworkSpec,
    weights: Mapping[str, ConvWeights],
    image: Union[np.ndarray, QuantTensor],
    p: int,
) -> Bounds:
    """
    Per-layer [lo, hi] enclosing every probabilistic-truncation outcome

    lo never exceeds the exact-mode value. hi adds one after each dealer-pair shift and
    carries the slack through the following layers: convolutions split
    their filters by sign and squares take the larger endpoint. The readout
    layer has no interval.

    Raises:
        TruncationBoundError: some value in an interval can reach the bound
    """
    x = image.values if isinstance(image, QuantTensor) else np.asarray(image, dtype=np.int64)
    if tuple(x.shape) != spec.input_dims:
        raise QuantizationError(f"Input shape {x.shape} does not match {spec.input_dims}")
    shifted = [i for i in range(len(spec.layers)) if _probabilistic_shift(spec, i)]
    slack = {_carry_index(spec, i) for i in shifted}
    lo, hi = LayerState(x), LayerState(x.copy())
    out: Bounds = {}
    for i, layer in enumerate(spec.layers):
        if layer.kind == LayerKind.ARGMAX:
            break
        lo_raw, hi_raw = _interval(layer, lo, hi, weights)
        shift = _probabilistic_shift(spec, i)
        if shift:
            bound = truncation_bound(p, shift, spec.quant.margin)
            peak = int(max(np.abs(lo_raw).max(), np.abs(hi_raw).max())) if lo_raw.size else 0
            if peak >= bound:
                raise TruncationBoundError(layer.name, peak, bound)
        if layer.kind in SHIFTING:
            lo_raw, hi_raw = floor_shift(lo_raw, layer.shift), floor_shift(hi_raw, layer.shift)
        lo.x, hi.x = lo_raw, hi_raw + (1 if i in slack else 0)
        out[layer.name] = (lo.x, hi.x)
    return out


def certain_labels(bounds: Bounds, spec: NetworkSpec) -> np.ndarray:
    """
    Voxels whose readout cannot change under any carry pattern

    True where the lower logit bound of the exact winner beats the upper
    bound of every other label.
    """
    lo, hi = bounds[spec.layers[-2].name]
    winner = np.argmax(lo, axis=0)
    best = np.take_along_axis(lo, winner[None], axis=0)[0]
    own = np.arange(lo.shape[0]).reshape(-1, 1, 1, 1) == winner[None]
    rivals = np.where(own, np.iinfo(np.int64).min, hi)
    return best > rivals.max(axis=0)


def identity_weights(spec: NetworkSpec) -> Optional[Dict[str, ConvWeights]]:
    """
    Delta filters that pass channel min(o, C_in - 1) through every conv

    Only meaningful for specs without pooling or upsampling.
    """
    if spec.of_kind(LayerKind.POOL, LayerKind.TRANSPOSED_CONV):
        return None
    out: Dict[str, ConvWeights] = {}
    for layer in spec.of_kind(LayerKind.CONV):
        c_out, c_in = layer.out_dims[0], layer.in_dims[0]
        shape = (c_out, c_in) + tuple(layer.kernel)  # type: ignore[arg-type]
        kernel = np.zeros(shape, dtype=np.int64)
        center = tuple(k // 2 for k in layer.kernel)  # type: ignore[union-attr]
        for o in range(c_out):
            kernel[(o, min(o, c_in - 1)) + center] = 1
        out[layer.name] = ConvWeights(kernel)
    return out
