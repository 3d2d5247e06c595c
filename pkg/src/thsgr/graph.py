"""Dynamic salient graph encoder coupling the two modality streams.

Every spatial position of the k x k feature maps is a graph node, so with
token count N = k*k and node width D the operand orientations are fixed as
follows (asserted in :func:`graph_representation`):

* ``Q``: learned pointwise projection of the HSI stream, channels last,
  shape (B, N, D).
* ``V``: raw HSI tokens, channels last, (B, N, D).
* ``K``: raw SAR/LiDAR tokens with the channel dimension leading, (B, D, N).
* ``T``: mask-gated pointwise features of the SAR/LiDAR stream, channels
  last, (B, N, D).

That typing makes the whole chain well-formed: the attention map
``A = softmax(Q.K)`` is (B, N, N) and row-stochastic; the relationship
matrix ``M_r = sigmoid(K.T)`` couples feature coordinates, (B, D, D); the
dynamic weight ``W`` reconstructed from ``A.V`` by a kernel-1 1-D
convolution over the feature axis is (B, D, D); and the salient graph
representation ``G = (A.V).W.M_r`` lands back on (B, N, D) node features.
All four quantities are recomputed from the input, so distinct samples get
distinct adjacency and weights rather than a fixed graph.

Because K and V reuse the stem outputs directly, the encoder is only
well-typed when both stems end at the node width D; the constructor
enforces that.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .encoder import he_init
from .errors import ConfigError

__all__ = [
    "GraphEncoderParams",
    "GraphRepr",
    "make_mask",
    "masked_features",
    "relationship_matrix",
    "attention_map",
    "dynamic_weight",
    "graph_representation",
    "tokens_channels_last",
    "tokens_channels_first",
]


def tokens_channels_last(x: Tensor) -> Tensor:
    """(B, C, k, k) -> (B, k*k, C)."""
    b, c, h, w = x.shape
    return ad.transpose(ad.reshape(x, (b, c, h * w)), (0, 2, 1))


def tokens_channels_first(x: Tensor) -> Tensor:
    """(B, C, k, k) -> (B, C, k*k)."""
    b, c, h, w = x.shape
    return ad.reshape(x, (b, c, h * w))


@dataclass
class GraphEncoderParams:
    """Mask, feature and Q projections (all pointwise) plus the kernel-1
    weight-reconstruction convolution, whose input channels are the N
    tokens."""

    mask_w: Tensor
    mask_b: Tensor
    feat_w: Tensor
    feat_b: Tensor
    q_w: Tensor
    q_b: Tensor
    wrec_w: Tensor
    wrec_b: Tensor

    @classmethod
    def create(cls, rng: np.random.Generator, width: int,
               n_tokens: int) -> "GraphEncoderParams":
        def conv1x1():
            return he_init(rng, (width, width, 1, 1)), ad.parameter(np.zeros(width))

        mask_w, mask_b = conv1x1()
        feat_w, feat_b = conv1x1()
        q_w, q_b = conv1x1()
        # weight reconstruction mixes the N node responses per feature slot;
        # scaled down so W starts near zero and G starts small
        wrec_w = ad.parameter(
            rng.standard_normal((width, n_tokens, 1)) / n_tokens)
        wrec_b = ad.parameter(np.zeros(width))
        return cls(mask_w, mask_b, feat_w, feat_b, q_w, q_b, wrec_w, wrec_b)

    @property
    def width(self) -> int:
        return self.mask_w.shape[0]

    @property
    def n_tokens(self) -> int:
        return self.wrec_w.shape[1]

    def parameters(self):
        yield "graph.mask.w", self.mask_w
        yield "graph.mask.b", self.mask_b
        yield "graph.feat.w", self.feat_w
        yield "graph.feat.b", self.feat_b
        yield "graph.q.w", self.q_w
        yield "graph.q.b", self.q_b
        yield "graph.wrec.w", self.wrec_w
        yield "graph.wrec.b", self.wrec_b


@dataclass
class GraphRepr:
    """Outputs of one graph-encoder pass (batched)."""

    g_map: Tensor         # (B, D, k, k) node features folded back to a map
    attention: Tensor     # (B, N, N) row-stochastic
    relationship: Tensor  # (B, D, D) entries in (0, 1)
    weight: Tensor        # (B, D, D) dynamic weight


def make_mask(x: Tensor, params: GraphEncoderParams) -> Tensor:
    """Saliency gate in (0, 1): sigmoid of a pointwise convolution."""
    return ad.sigmoid(ad.conv2d(x, params.mask_w, params.mask_b))


def masked_features(x: Tensor, params: GraphEncoderParams) -> Tensor:
    """Mask-gated pointwise features, flattened to (B, N, D) tokens."""
    feat = ad.conv2d(x, params.feat_w, params.feat_b)
    gated = ad.hadamard(feat, make_mask(x, params))
    return tokens_channels_last(gated)


def relationship_matrix(k: Tensor, t: Tensor) -> Tensor:
    """sigmoid(K.T): content-aware coupling of feature coordinates."""
    if k.shape[-1] != t.shape[-2]:
        raise ConfigError(
            f"relationship_matrix inner dims disagree: {k.shape} . {t.shape}")
    return ad.sigmoid(ad.matmul(k, t))


def attention_map(q: Tensor, k: Tensor) -> Tensor:
    """Row-wise softmax of Q.K."""
    return ad.softmax(ad.matmul(q, k), axis=-1)


def dynamic_weight(av: Tensor, params: GraphEncoderParams) -> Tensor:
    """Kernel-1 conv over the feature axis of A.V: (B, N, D) -> (B, D, D)."""
    return ad.conv1d(av, params.wrec_w, params.wrec_b)


def graph_representation(o1: Tensor, o2: Tensor,
                         params: GraphEncoderParams) -> GraphRepr:
    """Fuse the HSI stream (Q, V) with the SAR/LiDAR stream (K, T)."""
    if o1.shape != o2.shape:
        raise ConfigError(
            f"graph encoder needs equal-width streams, got {o1.shape} and "
            f"{o2.shape}")
    b, c, kh, kw = o1.shape
    n = kh * kw
    if c != params.width:
        raise ConfigError(
            f"stream width {c} does not match encoder width {params.width}")
    if n != params.n_tokens:
        raise ConfigError(
            f"token count {n} does not match encoder geometry "
            f"{params.n_tokens}")

    q = tokens_channels_last(ad.conv2d(o1, params.q_w, params.q_b))
    v = tokens_channels_last(o1)
    k = tokens_channels_first(o2)
    t = masked_features(o2, params)

    m_r = relationship_matrix(k, t)          # (B, D, D)
    a = attention_map(q, k)                  # (B, N, N)
    av = ad.matmul(a, v)                     # (B, N, D)
    w = dynamic_weight(av, params)           # (B, D, D)
    g = ad.matmul(ad.matmul(av, w), m_r)     # (B, N, D)
    assert g.shape == (b, n, c)

    g_map = ad.reshape(ad.transpose(g, (0, 2, 1)), (b, c, kh, kw))
    return GraphRepr(g_map=g_map, attention=a, relationship=m_r, weight=w)
