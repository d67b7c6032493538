"""
Unit tests for the UNET architecture, quantization, oracle and tensor files
"""

import numpy as np
import pytest
from pydantic import ValidationError

from src.protocols.conv import ConvWeights
from src.ring.params import RingParams
from src.unet import (
    LayerKind,
    LayerSpec,
    NetworkSpec,
    QuantParams,
    Variant,
    activation_counts,
    build_unet_architecture,
    layer_census,
)
from src.unet.oracle import (
    CarryReplay,
    certain_labels,
    conv_reference,
    floor_shift,
    identity_weights,
    oracle_bounds,
    oracle_infer,
    window_max,
    window_sum,
)
from src.unet.quant import (
    QuantTensor,
    analyze_headroom,
    check_headroom,
    check_weights,
    fit_frac_bits,
    fold_batch_norm,
    gen_synthetic_input,
    gen_synthetic_weights,
    quantize_weights,
)
from src.unet.spec import fused_with_next_activation, fused_with_previous_activation
from src.unet.tensor_io import (
    dump_tensor,
    dump_weights,
    load_tensor,
    load_tensor_bytes,
    load_weights,
    load_weights_bytes,
    save_tensor,
    save_weights,
)
from src.utils.errors import (
    FormatError,
    QuantizationError,
    QuantizationOverflowError,
    SpecError,
)
from src.utils.settings import TruncationMode

P20 = RingParams.default().p

TABLE_ACTIVATIONS = {
    1: 33554432,
    2: 8388608,
    3: 2097152,
    4: 524288,
    5: 2097152,
    6: 8388608,
    7: 33554432,
}


@pytest.fixture(scope="module")
def full_spec():
    """The 64^3 network with 64 base channels"""
    return build_unet_architecture((1, 64, 64, 64), labels=3)


def _pointwise_spec() -> NetworkSpec:
    """One 1x3x3 conv from 1 to 2 channels, then the readout"""
    layers = [
        LayerSpec(
            name="c1",
            kind=LayerKind.CONV,
            batch=1,
            in_dims=(1, 1, 4, 4),
            out_dims=(2, 1, 4, 4),
            kernel=(1, 3, 3),
        ),
        LayerSpec(
            name="out", kind=LayerKind.ARGMAX, batch=2, in_dims=(2, 1, 4, 4), out_dims=(1, 1, 4, 4)
        ),
    ]
    return NetworkSpec(name="tiny", input_dims=(1, 1, 4, 4), labels=2, layers=layers)


def test_layer_census(full_spec):
    """Test the full architecture census"""
    assert layer_census(full_spec) == {
        "conv": 19,
        "transposed_conv": 3,
        "activation": 14,
        "pool": 3,
        "argmax": 1,
    }


def test_activation_counts_per_batch(full_spec):
    """Test activation evaluations of batches 1 to 7"""
    assert activation_counts(full_spec) == TABLE_ACTIVATIONS


def test_scaled_network_counts():
    """Test 8^3 input with 4 base channels"""
    spec = build_unet_architecture((1, 8, 8, 8), base_channels=4)
    assert activation_counts(spec)[1] == 4096
    assert spec.layer("b4.conv1").out_dims == (32, 1, 1, 1)


def test_two_dimensional_layers():
    """Test 2D inputs use 1x3x3 kernels and 1x2x2 windows"""
    spec = build_unet_architecture((1, 16, 16), base_channels=2)
    assert spec.input_dims == (1, 1, 16, 16)
    assert spec.layer("b1.conv1").kernel == (1, 3, 3)
    assert spec.layer("b1.pool").window == (1, 2, 2)
    assert spec.layer("b4.conv1").out_dims == (16, 1, 2, 2)
    assert spec.layer("b4.up").out_dims == (8, 1, 4, 4)
    assert spec.layer("b5.concat").out_dims == (16, 1, 4, 4)
    assert spec.output_dims == (1, 1, 16, 16)


def test_layer_names_and_batches(full_spec):
    """Test named layers and the nine batches"""
    for name in ("b1.conv1", "b1.act1", "b1.quant1", "b1.skip", "b1.pool", "b8.mix", "b9.argmax"):
        full_spec.layer(name)
    assert [batch for batch, _ in full_spec.batches()] == list(range(1, 10))
    with pytest.raises(SpecError):
        full_spec.layer("b10.conv1")


@pytest.mark.parametrize(
    "variant,pool,first,middle",
    [
        (Variant.BASELINE, "max", "relu", "relu"),
        (Variant.RELU_AVG, "avg", "relu", "relu"),
        (Variant.HYBRID, "avg", "square", "relu"),
        (Variant.SQUARE, "avg", "square", "square"),
    ],
)
def test_variant_assignment(variant, pool, first, middle):
    """Test activations and pooling per variant"""
    spec = build_unet_architecture((1, 8, 8), variant=variant, base_channels=2)
    assert spec.layer("b2.pool").pool.value == pool
    assert spec.layer("b1.act1").activation.value == first
    assert spec.layer("b7.act2").activation.value == first
    assert spec.layer("b4.act1").activation.value == middle


def test_dims_must_halve_three_times():
    """Test spatial dims not divisible by 8"""
    with pytest.raises(SpecError):
        build_unet_architecture((1, 12, 12))
    with pytest.raises(SpecError):
        build_unet_architecture((1, 8))


def test_chain_validation():
    """Test broken dims, unknown skips and a missing readout"""
    spec = build_unet_architecture((1, 8, 8), base_channels=2)
    data = spec.model_dump()
    data["layers"][1]["in_dims"] = (3, 1, 8, 8)
    with pytest.raises(SpecError):
        NetworkSpec.model_validate(data)

    data = spec.model_dump()
    index = spec.index("b5.concat")
    data["layers"][index]["source"] = "b9.skip"
    with pytest.raises(SpecError):
        NetworkSpec.model_validate(data)

    data = spec.model_dump()
    data["layers"] = data["layers"][:-1]
    with pytest.raises(SpecError):
        NetworkSpec.model_validate(data)


def test_layer_field_validation():
    """Test pydantic rejects batch 0"""
    with pytest.raises(ValidationError):
        LayerSpec(name="x", kind="conv", batch=0, in_dims=(1, 1, 1, 1), out_dims=(1, 1, 1, 1))


def test_spec_yaml_roundtrip(tmp_path):
    """Test spec YAML roundtrip"""
    spec = build_unet_architecture((1, 8, 8), variant=Variant.HYBRID, base_channels=2)
    again = NetworkSpec.from_yaml(spec.to_yaml())
    assert again == spec
    assert again.fingerprint() == spec.fingerprint()
    path = tmp_path / "specs" / "unet.yaml"
    spec.save(path)
    assert NetworkSpec.load(path) == spec


def test_spec_load_errors(tmp_path):
    """Test unreadable, malformed and non-mapping spec files"""
    with pytest.raises(SpecError):
        NetworkSpec.load(tmp_path / "missing.yaml")
    with pytest.raises(SpecError):
        NetworkSpec.from_yaml("layers: [unclosed")
    with pytest.raises(SpecError):
        NetworkSpec.from_yaml("- just\n- a list\n")


def test_fingerprint_tracks_shifts():
    """Test a changed shift changes the fingerprint"""
    spec = build_unet_architecture((1, 8, 8), base_channels=2)
    shifted = spec.with_shifts({"b1.conv1": 3})
    assert shifted.layer("b1.conv1").shift == 3
    assert shifted.fingerprint() != spec.fingerprint()


def test_fusion_helpers():
    """Test conv-activation and activation-quantize fusion points"""
    spec = build_unet_architecture((1, 8, 8), base_channels=2)
    assert fused_with_next_activation(spec, spec.index("b1.conv1"))
    assert not fused_with_next_activation(spec, spec.index("b8.labels"))
    assert fused_with_previous_activation(spec, spec.index("b1.quant1"))
    assert not fused_with_previous_activation(spec, spec.index("b1.skip"))


def test_quantize_weights_examples():
    """Test 0 maps to 0, 1.0 at eight fraction bits to 256"""
    q = quantize_weights(np.array([0.0, 1.0, -0.5]), bits=12, frac_bits=8)
    assert q.values.tolist() == [0, 256, -128]
    assert q.dequantize().tolist() == [0.0, 1.0, -0.5]


def test_quantize_weights_errors():
    """Test overflow and non-finite inputs"""
    with pytest.raises(QuantizationOverflowError):
        quantize_weights(np.array([1.0]), bits=8, frac_bits=8)
    with pytest.raises(QuantizationError):
        quantize_weights(np.array([np.nan]), bits=8, frac_bits=2)


def test_fit_frac_bits():
    """Test fraction width fitting"""
    assert fit_frac_bits(np.array([0.5, -0.25]), 4) == 3
    assert fit_frac_bits(np.zeros(3), 6) == 5
    frac = fit_frac_bits(np.array([3.3]), 8)
    assert round(3.3 * 2**frac) <= 127 < round(3.3 * 2 ** (frac + 1))


def test_fold_batch_norm():
    """Test the folded conv reproduces the normalized output"""
    kernel = np.ones((1, 1, 1, 1, 1))
    folded, bias = fold_batch_norm(kernel, None, [2.0], [1.0], [0.5], [4.0], eps=0.0)
    assert folded.ravel().tolist() == [1.0]
    assert bias.tolist() == [0.5]
    with pytest.raises(QuantizationError):
        fold_batch_norm(kernel, None, [1.0, 1.0], [0.0], [0.0], [1.0])


def test_quant_tensor_residues():
    """Test negative values map to p - |x|"""
    q = QuantTensor([-1, 0, 5])
    assert q.residues(17).tolist() == [16, 0, 5]
    with pytest.raises(QuantizationOverflowError):
        QuantTensor([8]).check(4)


def test_synthetic_weights_and_input():
    """Test determinism and the quantization bounds"""
    spec = build_unet_architecture((1, 8, 8), base_channels=2, bias=True)
    w1 = gen_synthetic_weights(spec, 3)
    w2 = gen_synthetic_weights(spec, 3)
    assert sorted(w1) == sorted(
        layer.name for layer in spec.of_kind(LayerKind.CONV, LayerKind.TRANSPOSED_CONV)
    )
    for name, w in w1.items():
        assert np.array_equal(w.kernel, w2[name].kernel)
        assert np.abs(w.kernel).max() <= spec.quant.weight_max
        assert w.bias is not None
    image = gen_synthetic_input(spec, 4)
    assert image.shape == spec.input_dims
    assert image.min() >= 0 and image.max() < spec.quant.activation_limit
    check_weights(spec, w1)


def test_check_weights_errors():
    """Test missing banks, wrong shapes and oversized weights"""
    spec = build_unet_architecture((1, 8, 8), base_channels=2)
    weights = gen_synthetic_weights(spec, 0)
    missing = dict(weights)
    del missing["b1.conv1"]
    with pytest.raises(QuantizationError):
        check_weights(spec, missing)
    reshaped = dict(weights)
    reshaped["b1.conv1"] = ConvWeights(np.zeros((2, 1, 3, 3, 1), dtype=np.int64))
    with pytest.raises(QuantizationError):
        check_weights(spec, reshaped)
    large = dict(weights)
    large["b8.mix"] = ConvWeights(weights["b8.mix"].kernel * 0 + 100)
    with pytest.raises(QuantizationOverflowError):
        check_weights(spec, large)


def test_calibrated_shifts_bound_activations(tiny_relu_unet):
    """Test calibrated activations fit b_a bits"""
    spec, weights, image = tiny_relu_unet
    result = oracle_infer(spec, weights, image, P20)
    limit = spec.quant.activation_limit
    for layer in spec.of_kind(LayerKind.CONV, LayerKind.TRANSPOSED_CONV, LayerKind.ACTIVATION):
        assert np.abs(result.intermediates[layer.name]).max() < limit
    assert any(layer.shift for layer in spec.layers)


def test_oracle_labels(tiny_relu_unet):
    """Test the label map shape and range"""
    spec, weights, image = tiny_relu_unet
    result = oracle_infer(spec, weights, image, P20)
    assert result.labels.shape == (1, 8, 8)
    assert set(np.unique(result.labels).tolist()) <= {0, 1, 2}
    assert result.logits.shape == (3, 1, 8, 8)
    again = oracle_infer(spec, weights, image, P20)
    assert np.array_equal(again.labels, result.labels)


def test_oracle_errors(tiny_relu_unet):
    """Test wrong input shape and an input beyond the modulus range"""
    spec, weights, image = tiny_relu_unet
    with pytest.raises(QuantizationError):
        oracle_infer(spec, weights, image[:, :, :4], P20)
    with pytest.raises(QuantizationOverflowError):
        oracle_infer(spec, weights, image + 100, 97)


def test_carry_replay_adds_zero_or_one():
    """Test replayed carries round stochastically"""
    replay = CarryReplay(7, P20, margin=2)
    v = np.repeat(np.array([-13, -4, 0, 5, 11], dtype=np.int64), 4000)
    carries = replay.carries(v, 2)
    assert set(np.unique(carries).tolist()) <= {0, 1}
    assert not carries[v % 4 == 0].any()
    means = carries.reshape(5, -1).mean(axis=1)
    assert np.allclose(means, [0.75, 0.0, 0.0, 0.25, 0.75], atol=0.05)
    again = CarryReplay(7, P20, margin=2).carries(v, 2)
    assert np.array_equal(again, carries)


def test_carry_bounds_bracket_replayed_runs(tiny_hybrid_unet):
    """Test carry bounds bracket replayed runs"""
    spec, weights, image = tiny_hybrid_unet
    bounds = oracle_bounds(spec, weights, image, P20)
    exact = oracle_infer(spec, weights, image, P20)
    assert set(bounds) == {layer.name for layer in spec.layers[:-1]}
    for seed in (1, 2):
        replay = oracle_infer(spec, weights, image, P20, TruncationMode.PROBABILISTIC, seed)
        for name, (lo, hi) in bounds.items():
            for values in (exact.intermediates[name], replay.intermediates[name]):
                assert np.all(lo <= values) and np.all(values <= hi), name
        certain = certain_labels(bounds, spec)
        assert np.array_equal(replay.labels[certain], exact.labels[certain])
    lo, hi = bounds["b1.quant1"]
    assert np.any(hi > lo)


def test_carry_bounds_collapse_without_probabilistic_shifts(tiny_relu_unet):
    """Test carry bounds before any dealer pair"""
    spec, weights, image = tiny_relu_unet
    bounds = oracle_bounds(spec, weights, image, P20)
    lo, hi = bounds["b3.pool"]
    assert np.array_equal(lo, hi)
    lo, hi = bounds["b4.up"]
    assert np.all(hi - lo <= 1)
    assert certain_labels(bounds, spec).shape == (1, 8, 8)


def test_identity_weights():
    """Test delta filters copy the input into every output channel"""
    spec = _pointwise_spec()
    weights = identity_weights(spec)
    image = np.arange(16).reshape(1, 1, 4, 4) - 8
    result = oracle_infer(spec, weights, image, 97)
    assert np.array_equal(result.intermediates["c1"], np.concatenate([image, image]))
    assert result.labels.tolist() == np.zeros((1, 4, 4), dtype=int).tolist()
    assert identity_weights(build_unet_architecture((1, 8, 8), base_channels=2)) is None


def test_reference_helpers():
    """Test floor shifts, a pointwise conv and window reductions"""
    assert floor_shift(np.array([-5, -4, 5]), 1).tolist() == [-3, -2, 2]
    x = np.arange(16).reshape(1, 1, 4, 4)
    kernel = np.full((1, 1, 1, 1, 1), 2)
    assert np.array_equal(conv_reference(x, kernel, ((0, 0), (0, 0), (0, 0))), 2 * x)
    assert window_sum(x, (1, 2, 2))[0, 0].tolist() == [[10, 18], [42, 50]]
    assert window_max(x, (1, 2, 2))[0, 0].tolist() == [[5, 7], [13, 15]]


def test_headroom_analysis():
    """Test headroom analysis"""
    spec = build_unet_architecture((1, 8, 8), base_channels=2, quant=QuantParams())
    rows = analyze_headroom(spec, P20)
    assert len(rows) == 19
    first = rows[0]
    assert first.layer == "b1.conv1"
    assert first.bits == pytest.approx(5 + 3 + np.log2(9), abs=1e-3)
    assert first.ok
    assert check_headroom(spec, P20) == rows
    with pytest.raises(QuantizationError):
        check_headroom(spec, 97)


def test_tensor_file_roundtrip(tmp_path):
    """Test a signed 4D tensor through bytes and files"""
    x = np.arange(-12, 12).reshape(2, 1, 3, 4)
    assert np.array_equal(load_tensor_bytes(dump_tensor(x)), x)
    path = tmp_path / "out" / "x.bunt"
    save_tensor(path, x)
    assert np.array_equal(load_tensor(path), x)


def test_tensor_file_errors(tmp_path):
    """Test weight file errors"""
    blob = dump_tensor(np.arange(6).reshape(2, 3))
    with pytest.raises(FormatError):
        load_tensor_bytes(b"XXXX" + blob[4:])
    with pytest.raises(FormatError):
        load_tensor_bytes(blob[:-3])
    with pytest.raises(FormatError):
        load_tensor_bytes(blob + b"\x00")
    with pytest.raises(FormatError):
        load_tensor(tmp_path / "missing.bunt")


def test_weight_bundle_roundtrip(tmp_path):
    """Test kernels and biases survive the bundle format"""
    spec = build_unet_architecture((1, 8, 8), base_channels=2, bias=True)
    weights = gen_synthetic_weights(spec, 1)
    back = load_weights_bytes(dump_weights(weights))
    assert sorted(back) == sorted(weights)
    for name, w in weights.items():
        assert np.array_equal(back[name].kernel, w.kernel)
        assert np.array_equal(back[name].bias, w.bias)
    path = tmp_path / "w.bunw"
    save_weights(path, weights)
    assert sorted(load_weights(path)) == sorted(weights)
    with pytest.raises(FormatError):
        load_weights_bytes(b"NOPE" + dump_weights(weights)[4:])
