"""Multimodal HSI + SAR/LiDAR patch classifier built on a small tape-based
autodiff engine: heterogeneous conv branches, a dynamic salient graph
encoder, an attention-free multi-convolutional modulator, and a mean-forward
regularized head."""

from .autodiff import (
    Tensor,
    Tape,
    FlopCounter,
    no_grad,
    backward,
    grad_check,
    parameter,
)

__version__ = "0.1.0"
