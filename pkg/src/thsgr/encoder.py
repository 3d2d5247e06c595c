"""Modality-specific convolutional stems.

The hyperspectral branch stacks three 3-D convolutions whose spectral kernel
depths default to 7/5/3 (spectral axis unpadded so the band dimension is
compressed, spatial axes same-padded), each followed by LeakyReLU then BN,
then folds the channel and residual-spectral axes together and applies one
3x3 2-D convolution with LeakyReLU.  The SAR/LiDAR branch averages channels
down to one band and applies two conv->LeakyReLU->BN blocks.  Both stems end
at the same width so the graph encoder can treat their tokens symmetrically.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .errors import ConfigError

# negative slope 1/alpha = 0.01, the conventional default
LEAKY_ALPHA = 100.0

__all__ = ["HsiBranchParams", "SarBranchParams", "hsi_branch", "sar_branch",
           "LEAKY_ALPHA"]


def he_init(rng: np.random.Generator, shape) -> Tensor:
    fan_in = int(np.prod(shape[1:]))
    return ad.parameter(rng.standard_normal(shape) * np.sqrt(2.0 / fan_in))


@dataclass
class BatchNormState:
    """Affine parameters plus the running stats owned by the training thread."""

    gamma: Tensor
    beta: Tensor
    running_mean: np.ndarray
    running_var: np.ndarray

    @classmethod
    def create(cls, channels: int) -> "BatchNormState":
        return cls(gamma=ad.parameter(np.ones(channels)),
                   beta=ad.parameter(np.zeros(channels)),
                   running_mean=np.zeros(channels),
                   running_var=np.ones(channels))

    def __call__(self, x: Tensor, training: bool) -> Tensor:
        return ad.batch_norm(x, self.gamma, self.beta,
                             self.running_mean, self.running_var,
                             training=training)


@dataclass
class HsiBranchParams:
    spectral_kernels: tuple[int, ...]
    conv3d_w: list[Tensor]
    conv3d_b: list[Tensor]
    bn: list[BatchNormState]
    conv2d_w: Tensor
    conv2d_b: Tensor

    @classmethod
    def create(cls, rng: np.random.Generator, c_p: int,
               spectral_kernels: tuple[int, ...] = (7, 5, 3),
               channels: tuple[int, ...] = (8, 16, 32),
               out_channels: int = 64) -> "HsiBranchParams":
        if len(spectral_kernels) != len(channels):
            raise ConfigError("one channel width per 3-D layer required")
        remaining = c_p - sum(d - 1 for d in spectral_kernels)
        if remaining < 1:
            raise ConfigError(
                f"spectral kernels {spectral_kernels} need at least "
                f"{sum(d - 1 for d in spectral_kernels) + 1} bands, got {c_p}")
        w3, b3, bn = [], [], []
        c_in = 1
        for depth, c_out in zip(spectral_kernels, channels):
            w3.append(he_init(rng, (c_out, c_in, depth, 3, 3)))
            b3.append(ad.parameter(np.zeros(c_out)))
            bn.append(BatchNormState.create(c_out))
            c_in = c_out
        folded = channels[-1] * remaining
        return cls(spectral_kernels=tuple(spectral_kernels),
                   conv3d_w=w3, conv3d_b=b3, bn=bn,
                   conv2d_w=he_init(rng, (out_channels, folded, 3, 3)),
                   conv2d_b=ad.parameter(np.zeros(out_channels)))

    @property
    def out_channels(self) -> int:
        return self.conv2d_w.shape[0]

    def parameters(self):
        for i, (w, b, bn) in enumerate(zip(self.conv3d_w, self.conv3d_b, self.bn)):
            yield f"hsi.conv3d{i}.w", w
            yield f"hsi.conv3d{i}.b", b
            yield f"hsi.bn{i}.gamma", bn.gamma
            yield f"hsi.bn{i}.beta", bn.beta
        yield "hsi.conv2d.w", self.conv2d_w
        yield "hsi.conv2d.b", self.conv2d_b


@dataclass
class SarBranchParams:
    conv_w: list[Tensor]
    conv_b: list[Tensor]
    bn: list[BatchNormState]

    @classmethod
    def create(cls, rng: np.random.Generator, hidden: int = 32,
               out_channels: int = 64) -> "SarBranchParams":
        widths = [(1, hidden), (hidden, out_channels)]
        w, b, bn = [], [], []
        for c_in, c_out in widths:
            w.append(he_init(rng, (c_out, c_in, 3, 3)))
            b.append(ad.parameter(np.zeros(c_out)))
            bn.append(BatchNormState.create(c_out))
        return cls(conv_w=w, conv_b=b, bn=bn)

    @property
    def out_channels(self) -> int:
        return self.conv_w[-1].shape[0]

    def parameters(self):
        for i, (w, b, bn) in enumerate(zip(self.conv_w, self.conv_b, self.bn)):
            yield f"sar.conv2d{i}.w", w
            yield f"sar.conv2d{i}.b", b
            yield f"sar.bn{i}.gamma", bn.gamma
            yield f"sar.bn{i}.beta", bn.beta


def hsi_branch(x: Tensor, params: HsiBranchParams,
               training: bool = True) -> Tensor:
    """(B, 1, C_p, k, k) -> (B, C1, k, k) through the 3-D/2-D conv chain."""
    if x.ndim != 5:
        raise ConfigError(f"hsi_branch expects (B, 1, C_p, k, k), got {x.shape}")
    out = x
    for w, b, bn in zip(params.conv3d_w, params.conv3d_b, params.bn):
        out = ad.conv3d(out, w, b, padding=(0, 1, 1))
        out = ad.leaky_relu(out, LEAKY_ALPHA)
        out = bn(out, training)
    n, c, d, h, w_sp = out.shape
    out = ad.reshape(out, (n, c * d, h, w_sp))  # unite channel + spectral axes
    out = ad.conv2d(out, params.conv2d_w, params.conv2d_b, padding="same")
    return ad.leaky_relu(out, LEAKY_ALPHA)


def sar_branch(x: Tensor, params: SarBranchParams,
               training: bool = True) -> Tensor:
    """(B, C_L, k, k) -> (B, C2, k, k); multi-band input is channel-averaged."""
    if x.ndim != 4:
        raise ConfigError(f"sar_branch expects (B, C_L, k, k), got {x.shape}")
    out = x if x.shape[1] == 1 else ad.tmean(x, axis=1, keepdims=True)
    for w, b, bn in zip(params.conv_w, params.conv_b, params.bn):
        out = ad.conv2d(out, w, b, padding="same")
        out = ad.leaky_relu(out, LEAKY_ALPHA)
        out = bn(out, training)
    return out
