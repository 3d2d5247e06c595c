"""Mean-forward feedforward block, classification head, and the losses.

The mean-forward block is the overfitting counterweight: after a two-layer
GELU MLP, every token vector is replaced by the midpoint of itself and the
per-sample token mean (class token included).  That keeps the per-sample
mean exactly and contracts cross-token variance by a factor of 4.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .errors import ConfigError, DataError

__all__ = [
    "MeanForwardParams",
    "HeadParams",
    "mean_forward",
    "classify_head",
    "one_hot",
    "cross_entropy",
]


@dataclass
class MeanForwardParams:
    w1: Tensor  # (D, D_ff)
    b1: Tensor
    w2: Tensor  # (D_ff, D)
    b2: Tensor

    @classmethod
    def create(cls, rng: np.random.Generator, dim: int,
               hidden: int | None = None) -> "MeanForwardParams":
        h = hidden if hidden is not None else 4 * dim
        return cls(
            w1=ad.parameter(rng.standard_normal((dim, h)) * np.sqrt(2.0 / dim)),
            b1=ad.parameter(np.zeros(h)),
            w2=ad.parameter(rng.standard_normal((h, dim)) * np.sqrt(2.0 / h)),
            b2=ad.parameter(np.zeros(dim)),
        )

    def parameters(self):
        yield "meanforward.w1", self.w1
        yield "meanforward.b1", self.b1
        yield "meanforward.w2", self.w2
        yield "meanforward.b2", self.b2


def mean_forward(x: Tensor, params: MeanForwardParams) -> Tensor:
    """(B, L, D) -> (B, L, D): GELU MLP, then pull tokens toward their
    per-sample mean over the token axis."""
    if x.ndim != 3:
        raise ConfigError(f"mean_forward expects (B, L, D), got {x.shape}")
    h = ad.gelu_erf(ad.add(ad.matmul(x, params.w1), params.b1))
    o6 = ad.add(ad.matmul(h, params.w2), params.b2)
    avg = ad.tmean(o6, axis=1, keepdims=True)
    return ad.mul(ad.add(avg, o6), 0.5)


@dataclass
class HeadParams:
    w: Tensor  # (D, n_classes)
    b: Tensor

    @classmethod
    def create(cls, rng: np.random.Generator, dim: int,
               n_classes: int) -> "HeadParams":
        return cls(w=ad.parameter(rng.standard_normal((dim, n_classes))
                                  / np.sqrt(dim)),
                   b=ad.parameter(np.zeros(n_classes)))

    def parameters(self):
        yield "head.w", self.w
        yield "head.b", self.b


def classify_head(tokens: Tensor, params: HeadParams) -> Tensor:
    """Map the class token (position 0) to logits: (B, L, D) -> (B, C)."""
    b, _, d = tokens.shape
    cls = ad.reshape(ad.slice_axis(tokens, 1, 0, 1), (b, d))
    return ad.add(ad.matmul(cls, params.w), params.b)


def one_hot(label: int, n_classes: int) -> np.ndarray:
    """0-indexed one-hot target vector."""
    if not 0 <= label < n_classes:
        raise DataError(f"label {label} outside [0, {n_classes})")
    vec = np.zeros(n_classes)
    vec[label] = 1.0
    return vec


def cross_entropy(logits: Tensor, labels) -> Tensor:
    """Mean negative log-likelihood of the softmax over logits (log-space)."""
    labels = np.asarray(labels, dtype=np.int64)
    b, c = logits.shape
    if labels.shape != (b,):
        raise DataError(f"expected {b} labels, got shape {labels.shape}")
    if labels.min() < 0 or labels.max() >= c:
        bad = labels[(labels < 0) | (labels >= c)][0]
        raise DataError(f"label {bad} outside [0, {c})")
    targets = Tensor(np.stack([one_hot(int(l), c) for l in labels]))
    logp = ad.log_softmax(logits, axis=1)
    return ad.neg(ad.tmean(ad.tsum(ad.mul(logp, targets), axis=1)))
