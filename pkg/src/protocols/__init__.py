"""
Layer protocols on shared tensors: convolution, activations, pooling, readout
"""

from src.protocols.activation import ActivationKind, activation, relu, rescale, square
from src.protocols.conv import ConvWeights, hom_conv, plan_transposed_conv, transposed_conv
from src.protocols.conv_plan import ConvPlan, plan_conv, same_padding
from src.protocols.layout import TensorLayout
from src.protocols.pooling import PoolPlan, avg_pool_shares, max_pool, plan_pool
from src.protocols.readout import concat, readout_argmax, split_channels

__all__ = [
    "ActivationKind",
    "ConvPlan",
    "ConvWeights",
    "PoolPlan",
    "TensorLayout",
    "activation",
    "avg_pool_shares",
    "concat",
    "hom_conv",
    "max_pool",
    "plan_conv",
    "plan_pool",
    "plan_transposed_conv",
    "readout_argmax",
    "relu",
    "rescale",
    "same_padding",
    "split_channels",
    "square",
    "transposed_conv",
]
