"""Small reverse-mode autodiff engine, layers and optimizer for the embedding towers."""

from .gradcheck import check_gradients, numeric_gradient, relative_error
from .layers import MLP, BiGRU, ConvEncoder, LayerNorm, Linear, ParameterStore, load_weights, save_weights
from .optim import AdamW, OptimizerConfig, PlateauScheduler, plateau_schedule
from .tensor import (DegenerateInput, ShapeMismatch, Tensor, concat, conv2d, gru_sequence, l2_normalize,
                     layer_norm, linear, log_sigmoid, relu, sigmoid, softmax, stack, tanh)

__all__ = [
    "Tensor", "ShapeMismatch", "DegenerateInput", "concat", "stack", "linear", "layer_norm",
    "l2_normalize", "relu", "tanh", "sigmoid", "log_sigmoid", "softmax", "gru_sequence", "conv2d",
    "ParameterStore", "Linear", "LayerNorm", "MLP", "BiGRU", "ConvEncoder", "save_weights", "load_weights",
    "AdamW", "OptimizerConfig", "PlateauScheduler", "plateau_schedule",
    "check_gradients", "numeric_gradient", "relative_error",
]
