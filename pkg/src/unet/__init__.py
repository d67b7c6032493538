"""
UNET architecture, quantization and the plaintext reference
"""

from src.unet.spec import (
    LayerKind,
    LayerSpec,
    NetworkSpec,
    PoolKind,
    QuantParams,
    Variant,
    activation_counts,
    build_unet_architecture,
    layer_census,
)

__all__ = [
    "LayerKind",
    "LayerSpec",
    "NetworkSpec",
    "PoolKind",
    "QuantParams",
    "Variant",
    "activation_counts",
    "build_unet_architecture",
    "layer_census",
]
