"""
Declarative UNET architecture
"""

import hashlib
from enum import Enum
from pathlib import Path
from typing import Dict, Iterator, List, Optional, Sequence, Tuple

import yaml
from pydantic import BaseModel, ConfigDict, Field, model_validator

from src.protocols.activation import ActivationKind
from src.utils.errors import SpecError
from src.utils.logger import get_logger

logger = get_logger(__name__)

Dims = Tuple[int, int, int, int]
Triple = Tuple[int, int, int]


class LayerKind(str, Enum):
    CONV = "conv"
    TRANSPOSED_CONV = "transposed_conv"
    ACTIVATION = "activation"
    QUANTIZE = "quantize"
    POOL = "pool"
    CONCAT_SOURCE = "concat_source"
    CONCAT_SINK = "concat_sink"
    ARGMAX = "argmax"


class PoolKind(str, Enum):
    AVG = "avg"
    MAX = "max"


class Variant(str, Enum):
    """Activation/pooling assignment of the segmentation UNET"""

    BASELINE = "baseline"  # ReLU everywhere, max pooling
    RELU_AVG = "relu-avg"
    HYBRID = "hybrid"  # square in the first and last layer batches
    SQUARE = "square"


HYBRID_SQUARE_BATCHES = (1, 7)


class QuantParams(BaseModel):
    """Fixed-point budget shared by the oracle and the secure path"""

    model_config = ConfigDict(frozen=True)

    weight_bits: int = Field(default=4, ge=2, le=16, description="b_w, signed weight width")
    activation_bits: int = Field(default=6, ge=2, le=20, description="b_a, activation width")
    margin: int = Field(default=2, ge=0, le=8, description="Headroom bits below the modulus")

    @property
    def weight_max(self) -> int:
        return (1 << (self.weight_bits - 1)) - 1

    @property
    def activation_limit(self) -> int:
        """Exclusive bound on |activation|"""
        return 1 << (self.activation_bits - 1)


class LayerSpec(BaseModel):
    """One row of the architecture table"""

    model_config = ConfigDict(frozen=True)

    name: str
    kind: LayerKind
    batch: int = Field(..., ge=1)
    in_dims: Dims
    out_dims: Dims
    kernel: Optional[Triple] = None
    stride: Optional[Triple] = None
    window: Optional[Triple] = None
    activation: Optional[ActivationKind] = None
    pool: Optional[PoolKind] = None
    shift: int = Field(default=0, ge=0)
    bias: bool = False
    source: Optional[str] = None

    @property
    def out_channels(self) -> int:
        return self.out_dims[0]

    @property
    def volume(self) -> int:
        c, d, h, w = self.out_dims
        return c * d * h * w


class NetworkSpec(BaseModel):
    """
    Ordered layer list with chained dims

    Raises:
        SpecError: dims do not chain, or a layer lacks its parameters
    """

    model_config = ConfigDict(frozen=True)

    name: str = "unet"
    input_dims: Dims
    labels: int = Field(..., ge=2)
    variant: Variant = Variant.BASELINE
    quant: QuantParams = Field(default_factory=QuantParams)
    layers: List[LayerSpec]

    @model_validator(mode="after")
    def check_chain(self) -> "NetworkSpec":
        validate_chain(self)
        return self

    def layer(self, name: str) -> LayerSpec:
        for layer in self.layers:
            if layer.name == name:
                return layer
        raise SpecError(f"No layer named '{name}'")

    def index(self, name: str) -> int:
        for i, layer in enumerate(self.layers):
            if layer.name == name:
                return i
        raise SpecError(f"No layer named '{name}'")

    def of_kind(self, *kinds: LayerKind) -> List[LayerSpec]:
        return [layer for layer in self.layers if layer.kind in kinds]

    def batches(self) -> Iterator[Tuple[int, List[LayerSpec]]]:
        current: List[LayerSpec] = []
        for layer in self.layers:
            if current and layer.batch != current[0].batch:
                yield current[0].batch, current
                current = []
            current.append(layer)
        if current:
            yield current[0].batch, current

    @property
    def output_dims(self) -> Dims:
        return self.layers[-1].out_dims

    def with_shifts(self, shifts: Dict[str, int]) -> "NetworkSpec":
        layers = [
            layer.model_copy(update={"shift": shifts[layer.name]})
            if layer.name in shifts
            else layer
            for layer in self.layers
        ]
        return self.model_copy(update={"layers": layers})

    def fingerprint(self) -> str:
        return hashlib.sha256(self.model_dump_json().encode()).hexdigest()

    def to_yaml(self) -> str:
        return yaml.safe_dump(self.model_dump(mode="json"), sort_keys=False)

    @classmethod
    def from_yaml(cls, text: str) -> "NetworkSpec":
        try:
            data = yaml.safe_load(text)
        except yaml.YAMLError as e:
            raise SpecError(f"Invalid YAML: {e}") from e
        if not isinstance(data, dict):
            raise SpecError("Spec file must hold a mapping")
        return cls.model_validate(data)

    def save(self, path: Path) -> None:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(self.to_yaml())

    @classmethod
    def load(cls, path: Path) -> "NetworkSpec":
        try:
            text = Path(path).read_text()
        except OSError as e:
            raise SpecError(f"Cannot read spec file {path}: {e}") from e
        return cls.from_yaml(text)


def _spatial(dims: Sequence[int]) -> Tuple[int, ...]:
    return tuple(dims[1:])


def _require(layer: LayerSpec, *fields: str) -> None:
    for field in fields:
        if getattr(layer, field) is None:
            raise SpecError(f"Layer '{layer.name}' ({layer.kind.value}) needs '{field}'")


def _expected_out(layer: LayerSpec, skips: Dict[str, Dims]) -> Dims:
    c, d, h, w = layer.in_dims
    kind = layer.kind
    if kind == LayerKind.CONV:
        _require(layer, "kernel")
        if any(k % 2 == 0 for k in layer.kernel):  # type: ignore[union-attr]
            raise SpecError(f"Layer '{layer.name}' needs odd kernel dims")
        return (layer.out_dims[0], d, h, w)
    if kind == LayerKind.TRANSPOSED_CONV:
        _require(layer, "kernel", "stride")
        spatial = tuple(
            s * (x - 1) + k
            for x, k, s in zip((d, h, w), layer.kernel, layer.stride)  # type: ignore[arg-type]
        )
        return (layer.out_dims[0],) + spatial  # type: ignore[return-value]
    if kind == LayerKind.POOL:
        _require(layer, "window", "pool")
        zd, zh, zw = layer.window  # type: ignore[misc]
        if d % zd or h % zh or w % zw:
            raise SpecError(
                f"Layer '{layer.name}': window {layer.window} does not tile {(d, h, w)}"
            )
        return (c, d // zd, h // zh, w // zw)
    if kind == LayerKind.ACTIVATION:
        _require(layer, "activation")
    if kind == LayerKind.CONCAT_SINK:
        _require(layer, "source")
        if layer.source not in skips:
            raise SpecError(f"Layer '{layer.name}' concatenates unknown source '{layer.source}'")
        skip = skips[layer.source]  # type: ignore[index]
        if _spatial(skip) != (d, h, w):
            raise SpecError(f"Layer '{layer.name}': skip dims {skip} do not match {layer.in_dims}")
        return (c + skip[0], d, h, w)
    if kind == LayerKind.ARGMAX:
        return (1, d, h, w)
    return layer.in_dims


def validate_chain(spec: NetworkSpec) -> None:
    """Check that every layer consumes its predecessor's output"""
    if not spec.layers:
        raise SpecError("Spec has no layers")
    names = [layer.name for layer in spec.layers]
    if len(set(names)) != len(names):
        raise SpecError("Layer names must be unique")
    dims = spec.input_dims
    skips: Dict[str, Dims] = {}
    batch = 0
    for layer in spec.layers:
        if layer.in_dims != dims:
            raise SpecError(f"Layer '{layer.name}' expects {layer.in_dims}, receives {dims}")
        if layer.batch < batch:
            raise SpecError(f"Layer '{layer.name}' goes back to batch {layer.batch}")
        batch = layer.batch
        expected = _expected_out(layer, skips)
        if layer.out_dims != expected:
            raise SpecError(f"Layer '{layer.name}' outputs {layer.out_dims}, expected {expected}")
        if layer.kind == LayerKind.CONCAT_SOURCE:
            skips[layer.name] = layer.out_dims
        if layer.kind == LayerKind.ARGMAX and layer is not spec.layers[-1]:
            raise SpecError("Argmax must be the last layer")
        dims = layer.out_dims
    last = spec.layers[-1]
    if last.kind != LayerKind.ARGMAX:
        raise SpecError("The last layer must be the argmax readout")
    if last.in_dims[0] != spec.labels:
        raise SpecError(f"Readout sees {last.in_dims[0]} channels for {spec.labels} labels")


class _Builder:
    def __init__(self, input_dims: Dims):
        self.dims = input_dims
        self.layers: List[LayerSpec] = []

    def add(self, name: str, kind: LayerKind, batch: int, out: Optional[Dims] = None, **kw) -> None:
        layer = LayerSpec(
            name=name, kind=kind, batch=batch, in_dims=self.dims, out_dims=out or self.dims, **kw
        )
        self.layers.append(layer)
        self.dims = layer.out_dims


def build_unet_architecture(
    input_dims: Sequence[int],
    labels: int = 3,
    variant: Variant = Variant.BASELINE,
    quant: Optional[QuantParams] = None,
    base_channels: int = 64,
    bias: bool = False,
) -> NetworkSpec:
    """
    The nine-batch segmentation UNET

    Batches 1-3 are encoder stages ending in a skip and a 2x pooling, batch 4
    is the bottleneck ending in a transposed conv, batches 5-7 concatenate
    [upsampled | skip] and batches 5-6 upsample again. Batch 8 mixes channels
    with a pointwise conv, then maps to label logits; batch 9 is the argmax.

    Args:
        input_dims: (1, D, H, W); D = 1 selects the 2D variant
        labels: Number of segmentation classes
        variant: Activation and pooling assignment
        quant: Fixed-point budget
        base_channels: Channels of the first batch (64 in the full network)
        bias: Give every conv a bias term

    Raises:
        SpecError: dims cannot be halved three times
    """
    dims = tuple(int(x) for x in input_dims)
    if len(dims) == 3:
        dims = (dims[0], 1, dims[1], dims[2])
    if len(dims) != 4:
        raise SpecError(f"Input dims must be (C, D, H, W), got {dims}")
    three_d = dims[1] > 1
    for size in dims[1 if three_d else 2 :]:
        if size % 8:
            raise SpecError(f"Spatial dims must be divisible by 8, got {dims}")

    k3: Triple = (3, 3, 3) if three_d else (1, 3, 3)
    pair: Triple = (2, 2, 2) if three_d else (1, 2, 2)
    pool_kind = PoolKind.MAX if variant == Variant.BASELINE else PoolKind.AVG

    def act_kind(batch: int) -> ActivationKind:
        if variant == Variant.SQUARE:
            return ActivationKind.SQUARE
        if variant == Variant.HYBRID and batch in HYBRID_SQUARE_BATCHES:
            return ActivationKind.SQUARE
        return ActivationKind.RELU

    b = _Builder(dims)  # type: ignore[arg-type]

    def conv_block(batch: int, channels: int) -> None:
        for j in (1, 2):
            c, d, h, w = b.dims
            out = (channels, d, h, w)
            b.add(f"b{batch}.conv{j}", LayerKind.CONV, batch, out, kernel=k3, bias=bias)
            b.add(f"b{batch}.act{j}", LayerKind.ACTIVATION, batch, activation=act_kind(batch))
            b.add(f"b{batch}.quant{j}", LayerKind.QUANTIZE, batch)

    def upsample(batch: int, channels: int) -> None:
        _, d, h, w = b.dims
        out = (channels, pair[0] * d, pair[1] * h, pair[2] * w)
        up = LayerKind.TRANSPOSED_CONV
        b.add(f"b{batch}.up", up, batch, out, kernel=pair, stride=pair, bias=bias)

    for batch in (1, 2, 3):
        conv_block(batch, base_channels << (batch - 1))
        b.add(f"b{batch}.skip", LayerKind.CONCAT_SOURCE, batch)
        c, d, h, w = b.dims
        pooled = (c, d // pair[0], h // pair[1], w // pair[2])
        b.add(f"b{batch}.pool", LayerKind.POOL, batch, pooled, window=pair, pool=pool_kind)
    conv_block(4, base_channels << 3)
    upsample(4, base_channels << 2)
    for batch in (5, 6, 7):
        out = (b.dims[0] + (base_channels << (7 - batch)),) + b.dims[1:]
        b.add(f"b{batch}.concat", LayerKind.CONCAT_SINK, batch, out, source=f"b{8 - batch}.skip")
        conv_block(batch, base_channels << (7 - batch))
        if batch < 7:
            upsample(batch, base_channels << (6 - batch))
    c, d, h, w = b.dims
    b.add("b8.mix", LayerKind.CONV, 8, (c, d, h, w), kernel=(1, 1, 1), bias=bias)
    b.add("b8.labels", LayerKind.CONV, 8, (labels, d, h, w), kernel=k3, bias=bias)
    b.add("b9.argmax", LayerKind.ARGMAX, 9, (1, d, h, w))

    spec = NetworkSpec(
        name=f"unet-{variant.value}",
        input_dims=dims,  # type: ignore[arg-type]
        labels=labels,
        variant=variant,
        quant=quant or QuantParams(),
        layers=b.layers,
    )
    logger.debug(f"Built {spec.name} with {len(spec.layers)} layers for input {dims}")
    return spec


def layer_census(spec: NetworkSpec) -> Dict[str, int]:
    """Counts of convolutions (transposed included), activations, pools and readouts"""
    return {
        "conv": len(spec.of_kind(LayerKind.CONV, LayerKind.TRANSPOSED_CONV)),
        "transposed_conv": len(spec.of_kind(LayerKind.TRANSPOSED_CONV)),
        "activation": len(spec.of_kind(LayerKind.ACTIVATION)),
        "pool": len(spec.of_kind(LayerKind.POOL)),
        "argmax": len(spec.of_kind(LayerKind.ARGMAX)),
    }


def activation_counts(spec: NetworkSpec) -> Dict[int, int]:
    """Activation evaluations per layer batch, batches without activations omitted"""
    counts: Dict[int, int] = {}
    for layer in spec.of_kind(LayerKind.ACTIVATION):
        counts[layer.batch] = counts.get(layer.batch, 0) + layer.volume
    return counts


def fused_with_next_activation(spec: NetworkSpec, index: int) -> bool:
    """A conv whose rescale happens inside the following activation"""
    layers = spec.layers
    return (
        layers[index].kind in (LayerKind.CONV, LayerKind.TRANSPOSED_CONV)
        and index + 1 < len(layers)
        and layers[index + 1].kind == LayerKind.ACTIVATION
    )


def fused_with_previous_activation(spec: NetworkSpec, index: int) -> bool:
    """A quantize layer folded into the preceding activation's rescale"""
    layers = spec.layers
    return (
        layers[index].kind == LayerKind.QUANTIZE
        and index > 0
        and layers[index - 1].kind == LayerKind.ACTIVATION
    )
