"""Array layers, losses, Adam and parameter persistence."""

from .layers import (
    Conv1d,
    Dense,
    Dropout,
    Flatten,
    Layer,
    LeakyReLU,
    MaxPool1d,
    Parameter,
    ReLU,
    Reshape,
    Sequential,
    Sigmoid,
    Softmax,
    Upsample1d,
    dense,
    parameter_count,
    softmax,
    zero_grads,
)
from .losses import (
    binary_cross_entropy,
    binary_cross_entropy_grad,
    sparse_categorical_cross_entropy,
    sparse_categorical_cross_entropy_grad,
)
from .optim import Adam, adam_step
from .rng import SeededRng

__all__ = [
    "Adam",
    "Conv1d",
    "Dense",
    "Dropout",
    "Flatten",
    "Layer",
    "LeakyReLU",
    "MaxPool1d",
    "Parameter",
    "ReLU",
    "Reshape",
    "SeededRng",
    "Sequential",
    "Sigmoid",
    "Softmax",
    "Upsample1d",
    "adam_step",
    "binary_cross_entropy",
    "binary_cross_entropy_grad",
    "dense",
    "parameter_count",
    "softmax",
    "sparse_categorical_cross_entropy",
    "sparse_categorical_cross_entropy_grad",
    "zero_grads",
]
