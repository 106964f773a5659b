"""Minimal dense-tensor engine: conv, transposed conv, batchnorm, ReLU, MSE, Adam."""

from .functional import (
    RunningStats,
    batch_norm,
    batch_norm_backward,
    conv2d,
    conv2d_backward,
    mse_loss,
    relu,
    relu_backward,
    same_padding,
    tconv2d,
    tconv2d_backward,
)
from .layers import BatchNorm2D, Conv2D, ConvTranspose2D, ReLU
from .optim import Adam, adam_step
from .spec import LayerSpec, param_count
from .weights import load_weights, save_weights

__all__ = [
    "Adam",
    "BatchNorm2D",
    "Conv2D",
    "ConvTranspose2D",
    "LayerSpec",
    "ReLU",
    "RunningStats",
    "adam_step",
    "batch_norm",
    "batch_norm_backward",
    "conv2d",
    "conv2d_backward",
    "load_weights",
    "mse_loss",
    "param_count",
    "relu",
    "relu_backward",
    "same_padding",
    "save_weights",
    "tconv2d",
    "tconv2d_backward",
]
