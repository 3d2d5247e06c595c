"""FLOPs and parameter accounting for the attention baseline vs the
convolutional modulator.

One convention everywhere, shared with the live counter in
:mod:`thsgr.autodiff`: a multiply-add costs 2 FLOPs, a bias add 1 per
output element, and the per-element costs of the nonlinear ops come from
:data:`thsgr.autodiff.ELEMENTWISE_FLOPS` (softmax 5, GELU 10, elementwise
product 1).  Because the closed forms below are assembled from exactly the
primitives the forward passes execute, counter-measured totals equal the
closed forms exactly, and the leading-order terms reproduce the
quadratic-in-tokens attention cost versus the linear-in-tokens modulator
cost.
"""

from __future__ import annotations

import io
from dataclasses import dataclass

import numpy as np

from .autodiff import ELEMENTWISE_FLOPS, FlopCounter, Tensor
from .modulator import ModulatorParams, MsaParams, modulator_forward, msa_reference

__all__ = [
    "ProfileRow",
    "conv1d_flops",
    "matmul_flops",
    "msa_flops",
    "msa_projection_flops",
    "msa_attention_flops",
    "modulator_flops",
    "count_params",
    "measure_flops",
    "profile_msa",
    "profile_modulator",
    "profile_pair_rows",
    "rows_to_csv",
    "PAPER_SCALE_CONFIGS",
]

# token count (class token included) and embedding width at the three
# reference scales: two 15x15 patch grids and one 19x19
PAPER_SCALE_CONFIGS = ((226, 64), (226, 64), (362, 64))


def matmul_flops(n: int, m: int, p: int) -> int:
    return 2 * n * m * p


def conv1d_flops(length: int, c_in: int, c_out: int, kernel: int,
                 bias: bool = True) -> int:
    out = length * c_out
    return out * 2 * c_in * kernel + (out if bias else 0)


def msa_projection_flops(n: int, d: int) -> int:
    return 3 * matmul_flops(n, d, d)


def msa_attention_flops(n: int, d: int, heads: int) -> int:
    per_head = d // heads
    scores = heads * matmul_flops(n, per_head, n)
    scale = heads * n * n
    soft = ELEMENTWISE_FLOPS["softmax"] * heads * n * n
    mix = heads * matmul_flops(n, n, per_head)
    return scores + scale + soft + mix


def msa_flops(n: int, d: int, heads: int) -> int:
    """Closed-form cost of one (N, D) self-attention pass, h heads, no bias."""
    return msa_projection_flops(n, d) + msa_attention_flops(n, d, heads)


def modulator_flops(n: int, d: int, inner: int, kernel: int = 3) -> int:
    """Closed-form cost of one (N, D) modulator pass with biases."""
    w1 = conv1d_flops(n, d, inner, 1)
    gelu = ELEMENTWISE_FLOPS["gelu_erf"] * n * inner
    w2 = conv1d_flops(n, inner, inner, kernel)
    w3 = conv1d_flops(n, d, inner, 1)
    had = ELEMENTWISE_FLOPS["mul"] * n * inner
    w4 = conv1d_flops(n, inner, d, 1)
    return w1 + gelu + w2 + w3 + had + w4


def count_params(params) -> int:
    """Number of learnable scalars in anything exposing ``parameters()``
    (or an iterable of (name, tensor) pairs)."""
    items = params.parameters() if hasattr(params, "parameters") else params
    return sum(int(np.prod(t.shape)) if t.shape else 1 for _, t in items)


def measure_flops(fn) -> int:
    """Run `fn` under a live FLOP counter and return the measured total."""
    with FlopCounter() as counter:
        fn()
    return counter.flops


@dataclass
class ProfileRow:
    block: str
    config_n: int
    config_d: int
    flops_measured: int
    flops_closed_form: int
    params: int


def profile_msa(n: int, d: int, heads: int,
                rng: np.random.Generator) -> ProfileRow:
    params = MsaParams.create(rng, d, heads)
    x = Tensor(rng.standard_normal((n, d)))
    measured = measure_flops(lambda: msa_reference(x, params))
    return ProfileRow("msa", n, d, measured, msa_flops(n, d, heads),
                      count_params(params))


def profile_modulator(n: int, d: int, rng: np.random.Generator,
                      inner: int | None = None) -> ProfileRow:
    params = ModulatorParams.create(rng, d, inner)
    x = Tensor(rng.standard_normal((1, n, d)))
    measured = measure_flops(lambda: modulator_forward(x, params))
    return ProfileRow("modulator", n, d, measured,
                      modulator_flops(n, d, params.inner), count_params(params))


def profile_pair_rows(configs=PAPER_SCALE_CONFIGS, heads: int = 4,
                      seed: int = 0) -> list[ProfileRow]:
    rng = np.random.default_rng(seed)
    rows = []
    for n, d in configs:
        rows.append(profile_msa(n, d, heads, rng))
        rows.append(profile_modulator(n, d, rng))
    return rows


def rows_to_csv(rows) -> str:
    buf = io.StringIO()
    buf.write("block,config_N,config_D,flops_measured,flops_closed_form,params\n")
    for r in rows:
        buf.write(f"{r.block},{r.config_n},{r.config_d},{r.flops_measured},"
                  f"{r.flops_closed_form},{r.params}\n")
    return buf.getvalue()
