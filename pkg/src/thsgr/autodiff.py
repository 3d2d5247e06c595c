"""Dense-tensor reverse-mode automatic differentiation on a recorded tape.

Every numeric value in the model is a :class:`Tensor` wrapping a float64
numpy array.  Operations executed while gradients are enabled append a node
to the active :class:`Tape` (define-by-run); :func:`backward` replays the
tape in exact reverse recording order, which is a valid topological order
because nodes are appended in execution order.

Conventions used throughout:

* dtype is float64 everywhere; tight test tolerances need doubles.
* Every op checks its output for NaN/Inf and raises
  :class:`~thsgr.errors.NonFiniteError` naming the op, so a diverging
  training run aborts at the first non-finite tensor.
* FLOP accounting: ops add their cost to any active :class:`FlopCounter`.
  A multiply-add counts as 2 FLOPs; per-element costs of the nonlinear ops
  are pinned in :data:`ELEMENTWISE_FLOPS`.  The profiler's closed forms use
  the same table, so measured and closed-form counts agree exactly.
"""

from __future__ import annotations

import math
import threading
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from numpy.lib.stride_tricks import as_strided
from scipy.special import erf as _erf

from .errors import NonFiniteError, ParameterError, ShapeError, UsageError

__all__ = [
    "Tensor",
    "Tape",
    "FlopCounter",
    "ELEMENTWISE_FLOPS",
    "no_grad",
    "backward",
    "grad_check",
    "GradCheckReport",
    "parameter",
    "constant",
    "add",
    "sub",
    "neg",
    "mul",
    "hadamard",
    "matmul",
    "conv1d",
    "conv2d",
    "conv3d",
    "leaky_relu",
    "sigmoid",
    "softmax",
    "log_softmax",
    "gelu_erf",
    "batch_norm",
    "tsum",
    "tmean",
    "reshape",
    "transpose",
    "concat",
    "slice_axis",
]

# Pinned per-element FLOP costs for the nonlinear / misc ops.  Structural ops
# (matmul, conv) are costed as 2 FLOPs per multiply-add plus 1 per bias add.
ELEMENTWISE_FLOPS = {
    "add": 1,
    "sub": 1,
    "neg": 1,
    "mul": 1,
    "leaky_relu": 1,
    "sigmoid": 4,
    "softmax": 5,
    "log_softmax": 5,
    "gelu_erf": 10,
    "batch_norm": 4,
}


# ---------------------------------------------------------------------------
# Tape machinery
# ---------------------------------------------------------------------------

class _Node:
    """One recorded primitive application."""

    __slots__ = ("op", "inputs", "output", "backward_fn")

    def __init__(self, op, inputs, output, backward_fn):
        self.op = op
        self.inputs = inputs          # tuple of input Tensors
        self.output = output          # the Tensor this node produced
        self.backward_fn = backward_fn  # gout -> tuple of grads per input


class Tape:
    """Ordered record of primitive applications for one forward pass.

    Invariant: nodes appear in execution order, so every node's inputs were
    produced by earlier nodes (or are leaves).  :func:`backward` walks the
    list in exact reverse order and then clears it, matching the
    rebuilt-per-forward-pass model.
    """

    def __init__(self):
        self.nodes: list[_Node] = []

    def record(self, node: _Node) -> None:
        self.nodes.append(node)

    def clear(self) -> None:
        self.nodes.clear()

    def __len__(self) -> int:
        return len(self.nodes)


class _EngineState(threading.local):
    def __init__(self):
        self.tape = Tape()
        self.grad_enabled = True
        self.counters: list["FlopCounter"] = []


_STATE = _EngineState()


def active_tape() -> Tape:
    """The tape that ops on this thread currently record onto."""
    return _STATE.tape


class no_grad:
    """Context manager that disables tape recording (evaluation mode)."""

    def __enter__(self):
        self._prev = _STATE.grad_enabled
        _STATE.grad_enabled = False
        return self

    def __exit__(self, *exc):
        _STATE.grad_enabled = self._prev
        return False


class FlopCounter:
    """Per-invocation FLOP accumulator, active within a ``with`` block.

    Counters nest; each op adds its cost to every counter on the stack, so an
    outer counter sees the total of everything inside it.  The stack is
    thread-local: no global mutable counter is shared across threads.
    """

    def __init__(self):
        self.flops = 0

    def __enter__(self):
        _STATE.counters.append(self)
        return self

    def __exit__(self, *exc):
        _STATE.counters.remove(self)
        return False


def _count(n: int) -> None:
    if _STATE.counters:
        for c in _STATE.counters:
            c.flops += int(n)


# ---------------------------------------------------------------------------
# Tensor
# ---------------------------------------------------------------------------

class Tensor:
    """Dense n-dimensional float64 array with optional gradient slot.

    Tensors are immutable after construction as far as the engine is
    concerned: ops never write into ``data``, so values are safe to share
    read-only across threads.  ``grad`` is populated by :func:`backward` on
    requires-grad leaves and accumulates additively across calls.
    """

    __slots__ = ("data", "requires_grad", "grad")

    def __init__(self, data, requires_grad: bool = False):
        self.data = np.asarray(data, dtype=np.float64)
        self.requires_grad = bool(requires_grad)
        self.grad: np.ndarray | None = None

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    def item(self) -> float:
        return float(self.data.reshape(()))

    def zero_grad(self) -> None:
        self.grad = None

    def detach(self) -> "Tensor":
        return Tensor(self.data, requires_grad=False)

    def backward(self) -> None:
        backward(self)

    # Operator sugar; scalars and arrays are wrapped as constants.
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, scalar):
        return mul(self, 1.0 / float(scalar))

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def transpose(self, *axes):
        if len(axes) == 1 and isinstance(axes[0], (tuple, list)):
            axes = tuple(axes[0])
        return transpose(self, axes if axes else None)

    def __repr__(self):
        grad = "grad" if self.requires_grad else "no-grad"
        return f"Tensor(shape={self.shape}, {grad})"


def parameter(data) -> Tensor:
    """A learnable leaf tensor."""
    return Tensor(data, requires_grad=True)


def constant(data) -> Tensor:
    return Tensor(data, requires_grad=False)


def _as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _make(op: str, inputs: tuple[Tensor, ...], out_data: np.ndarray,
          backward_fn: Callable) -> Tensor:
    """Finite-check the result, wrap it, and record the node if needed."""
    if not np.all(np.isfinite(out_data)):
        raise NonFiniteError(f"op '{op}' produced non-finite values")
    track = _STATE.grad_enabled and any(t.requires_grad for t in inputs)
    out = Tensor(out_data, requires_grad=track)
    if track:
        _STATE.tape.record(_Node(op, inputs, out, backward_fn))
    return out


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum `g` down to `shape`, inverting numpy broadcasting."""
    extra = g.ndim - len(shape)
    if extra:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g


# ---------------------------------------------------------------------------
# Elementwise arithmetic
# ---------------------------------------------------------------------------

def add(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    out = a.data + b.data
    _count(ELEMENTWISE_FLOPS["add"] * out.size)

    def bwd(g):
        return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)

    return _make("add", (a, b), out, bwd)


def sub(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    out = a.data - b.data
    _count(ELEMENTWISE_FLOPS["sub"] * out.size)

    def bwd(g):
        return _unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)

    return _make("sub", (a, b), out, bwd)


def neg(a) -> Tensor:
    a = _as_tensor(a)
    out = -a.data
    _count(ELEMENTWISE_FLOPS["neg"] * out.size)
    return _make("neg", (a,), out, lambda g: (-g,))


def mul(a, b) -> Tensor:
    """Elementwise (Hadamard) product with numpy broadcasting."""
    a, b = _as_tensor(a), _as_tensor(b)
    out = a.data * b.data
    _count(ELEMENTWISE_FLOPS["mul"] * out.size)

    def bwd(g):
        return (_unbroadcast(g * b.data, a.shape),
                _unbroadcast(g * a.data, b.shape))

    return _make("mul", (a, b), out, bwd)


hadamard = mul


# ---------------------------------------------------------------------------
# Linear algebra
# ---------------------------------------------------------------------------

def matmul(a, b) -> Tensor:
    """Matrix product; operands must be >= 2-D, batch dims broadcast."""
    a, b = _as_tensor(a), _as_tensor(b)
    if a.ndim < 2 or b.ndim < 2:
        raise ShapeError(f"matmul needs matrices, got {a.shape} @ {b.shape}")
    if a.shape[-1] != b.shape[-2]:
        raise ShapeError(f"matmul inner dims disagree: {a.shape} @ {b.shape}")
    out = a.data @ b.data
    _count(2 * out.size * a.shape[-1])

    def bwd(g):
        ga = _unbroadcast(g @ b.data.swapaxes(-1, -2), a.shape)
        gb = _unbroadcast(a.data.swapaxes(-1, -2) @ g, b.shape)
        return ga, gb

    return _make("matmul", (a, b), out, bwd)


# ---------------------------------------------------------------------------
# Convolutions (shared n-dimensional core)
# ---------------------------------------------------------------------------

def _axis_tuple(value, nd, name):
    if isinstance(value, int):
        return (value,) * nd
    value = tuple(int(v) for v in value)
    if len(value) != nd:
        raise ParameterError(f"{name} must have {nd} entries, got {value}")
    return value


def _conv_nd(op: str, x, w, b, stride, padding, nd: int) -> Tensor:
    x, w = _as_tensor(x), _as_tensor(w)
    if x.ndim != nd + 2 or w.ndim != nd + 2:
        raise ShapeError(
            f"{op}: expected input ndim {nd + 2} and kernel ndim {nd + 2}, "
            f"got input {x.shape} and kernel {w.shape}")
    if x.shape[1] != w.shape[1]:
        raise ShapeError(
            f"{op}: input channels {x.shape} do not match kernel {w.shape}")
    kshape = w.shape[2:]
    if padding == "same":
        pad = tuple(k // 2 for k in kshape)
    else:
        pad = _axis_tuple(padding, nd, "padding")
    stride = _axis_tuple(stride, nd, "stride")
    if any(s < 1 for s in stride):
        raise ParameterError(f"{op}: stride must be >= 1, got {stride}")
    padded = tuple(x.shape[2 + i] + 2 * pad[i] for i in range(nd))
    if any(kshape[i] > padded[i] for i in range(nd)):
        raise ShapeError(
            f"{op}: kernel {w.shape} exceeds padded input "
            f"{x.shape} (padding {pad})")

    bias = _as_tensor(b) if b is not None else None
    if bias is not None and bias.shape != (w.shape[0],):
        raise ShapeError(
            f"{op}: bias shape {bias.shape} must be ({w.shape[0]},)")

    xp = np.pad(x.data, [(0, 0), (0, 0)] + [(p, p) for p in pad])
    out_sp = tuple((padded[i] - kshape[i]) // stride[i] + 1 for i in range(nd))
    st = xp.strides
    win_shape = xp.shape[:2] + kshape + out_sp
    win_strides = st[:2] + st[2:] + tuple(st[2 + i] * stride[i]
                                          for i in range(nd))
    win = as_strided(xp, win_shape, win_strides)

    contract = tuple(range(1, nd + 2))
    out = np.tensordot(w.data, win, axes=(contract, contract))  # (Co, B, *out)
    out = np.moveaxis(out, 1, 0)                                # (B, Co, *out)
    if bias is not None:
        out = out + bias.data.reshape((1, -1) + (1,) * nd)

    macs = out.size * x.shape[1] * math.prod(kshape)
    _count(2 * macs + (out.size if bias is not None else 0))

    x_shape, w_data = x.shape, w.data

    def bwd(g):
        # (B, Co, *out) contracted with windows over batch + output positions
        g_axes = (0,) + tuple(range(2, 2 + nd))
        w_axes = (0,) + tuple(range(2 + nd, 2 + 2 * nd))
        gw = np.tensordot(g, win, axes=(g_axes, w_axes))  # (Co, Ci, *k)
        gxp = np.zeros_like(xp)
        for offset in np.ndindex(*kshape):
            taps = w_data[(slice(None), slice(None)) + offset]  # (Co, Ci)
            contrib = np.tensordot(g, taps, axes=([1], [0]))    # (B, *out, Ci)
            contrib = np.moveaxis(contrib, -1, 1)               # (B, Ci, *out)
            sl = tuple(slice(offset[i], offset[i] + out_sp[i] * stride[i],
                             stride[i]) for i in range(nd))
            gxp[(slice(None), slice(None)) + sl] += contrib
        un = tuple(slice(pad[i], pad[i] + x_shape[2 + i]) for i in range(nd))
        gx = gxp[(slice(None), slice(None)) + un]
        if bias is not None:
            gb = g.sum(axis=(0,) + tuple(range(2, 2 + nd)))
            return gx, gw, gb
        return gx, gw

    inputs = (x, w) if bias is None else (x, w, bias)
    return _make(op, inputs, out, bwd)


def conv1d(x, w, b=None, stride=1, padding=0) -> Tensor:
    """1-D convolution: x (B, Ci, L), w (Co, Ci, k), b (Co,)."""
    return _conv_nd("conv1d", x, w, b, stride, padding, 1)


def conv2d(x, w, b=None, stride=1, padding=0) -> Tensor:
    """2-D convolution: x (B, Ci, H, W), w (Co, Ci, kh, kw), b (Co,)."""
    return _conv_nd("conv2d", x, w, b, stride, padding, 2)


def conv3d(x, w, b=None, stride=1, padding=0) -> Tensor:
    """3-D convolution: x (B, Ci, D, H, W), w (Co, Ci, kd, kh, kw), b (Co,)."""
    return _conv_nd("conv3d", x, w, b, stride, padding, 3)


# ---------------------------------------------------------------------------
# Nonlinearities
# ---------------------------------------------------------------------------

def leaky_relu(x, alpha: float) -> Tensor:
    """Identity for x >= 0, x / alpha for x < 0; requires alpha > 1."""
    if not alpha > 1.0:
        raise ParameterError(f"leaky_relu alpha must be > 1, got {alpha}")
    x = _as_tensor(x)
    nonneg = x.data >= 0
    out = np.where(nonneg, x.data, x.data / alpha)
    _count(ELEMENTWISE_FLOPS["leaky_relu"] * out.size)

    def bwd(g):
        return (np.where(nonneg, g, g / alpha),)

    return _make("leaky_relu", (x,), out, bwd)


def sigmoid(x) -> Tensor:
    """Logistic function, overflow-safe for large |x|."""
    x = _as_tensor(x)
    d = x.data
    out = np.empty_like(d)
    pos = d >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-d[pos]))
    e = np.exp(d[~pos])
    out[~pos] = e / (1.0 + e)
    _count(ELEMENTWISE_FLOPS["sigmoid"] * out.size)

    def bwd(g):
        return (g * out * (1.0 - out),)

    return _make("sigmoid", (x,), out, bwd)


def softmax(x, axis: int = -1) -> Tensor:
    """Softmax along `axis`, computed with the max subtracted per slice."""
    x = _as_tensor(x)
    shifted = x.data - x.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    out = e / e.sum(axis=axis, keepdims=True)
    _count(ELEMENTWISE_FLOPS["softmax"] * out.size)

    def bwd(g):
        inner = (g * out).sum(axis=axis, keepdims=True)
        return (out * (g - inner),)

    return _make("softmax", (x,), out, bwd)


def log_softmax(x, axis: int = -1) -> Tensor:
    x = _as_tensor(x)
    shifted = x.data - x.data.max(axis=axis, keepdims=True)
    out = shifted - np.log(np.exp(shifted).sum(axis=axis, keepdims=True))
    _count(ELEMENTWISE_FLOPS["log_softmax"] * out.size)

    def bwd(g):
        return (g - np.exp(out) * g.sum(axis=axis, keepdims=True),)

    return _make("log_softmax", (x,), out, bwd)


_INV_SQRT2 = 1.0 / math.sqrt(2.0)
_INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)


def gelu_erf(x) -> Tensor:
    """Exact-erf GELU: 0.5*x + 0.5*x*erf(x/sqrt(2))."""
    x = _as_tensor(x)
    d = x.data
    half_one_plus_erf = 0.5 * (1.0 + _erf(d * _INV_SQRT2))
    out = d * half_one_plus_erf
    _count(ELEMENTWISE_FLOPS["gelu_erf"] * out.size)

    def bwd(g):
        pdf = np.exp(-0.5 * d * d) * _INV_SQRT_2PI
        return (g * (half_one_plus_erf + d * pdf),)

    return _make("gelu_erf", (x,), out, bwd)


# ---------------------------------------------------------------------------
# Batch normalization
# ---------------------------------------------------------------------------

def batch_norm(x, gamma, beta, running_mean, running_var, *,
               eps: float = 1e-5, momentum: float = 0.1,
               training: bool = True) -> Tensor:
    """Per-channel batch norm over axis 1; conv -> activation -> BN order.

    In training mode the batch mean and biased variance normalize the input
    and the running stats (plain mutable ndarrays owned by the caller's
    single training thread) are updated by exponential moving average.  Eval
    mode normalizes with the running stats.
    """
    x, gamma, beta = _as_tensor(x), _as_tensor(gamma), _as_tensor(beta)
    if x.ndim < 2:
        raise ShapeError(f"batch_norm input must be >= 2-D, got {x.shape}")
    c = x.shape[1]
    if gamma.shape != (c,) or beta.shape != (c,):
        raise ShapeError(
            f"batch_norm affine params must have shape ({c},), got "
            f"gamma {gamma.shape}, beta {beta.shape}")
    axes = (0,) + tuple(range(2, x.ndim))
    bshape = (1, c) + (1,) * (x.ndim - 2)

    if training:
        mean = x.data.mean(axis=axes)
        var = x.data.var(axis=axes)
        running_mean *= (1.0 - momentum)
        running_mean += momentum * mean
        running_var *= (1.0 - momentum)
        running_var += momentum * var
    else:
        mean = np.asarray(running_mean, dtype=np.float64)
        var = np.asarray(running_var, dtype=np.float64)

    inv_std = 1.0 / np.sqrt(var + eps)
    xhat = (x.data - mean.reshape(bshape)) * inv_std.reshape(bshape)
    out = gamma.data.reshape(bshape) * xhat + beta.data.reshape(bshape)
    _count(ELEMENTWISE_FLOPS["batch_norm"] * out.size)

    if training:
        def bwd(g):
            ggamma = (g * xhat).sum(axis=axes)
            gbeta = g.sum(axis=axes)
            gxhat = g * gamma.data.reshape(bshape)
            m1 = gxhat.mean(axis=axes).reshape(bshape)
            m2 = (gxhat * xhat).mean(axis=axes).reshape(bshape)
            gx = inv_std.reshape(bshape) * (gxhat - m1 - xhat * m2)
            return gx, ggamma, gbeta
    else:
        def bwd(g):
            ggamma = (g * xhat).sum(axis=axes)
            gbeta = g.sum(axis=axes)
            gx = g * (gamma.data * inv_std).reshape(bshape)
            return gx, ggamma, gbeta

    return _make("batch_norm", (x, gamma, beta), out, bwd)


# ---------------------------------------------------------------------------
# Reductions and reshaping
# ---------------------------------------------------------------------------

def _norm_axes(axis, ndim):
    if axis is None:
        return tuple(range(ndim))
    if isinstance(axis, int):
        axis = (axis,)
    return tuple(a % ndim for a in axis)


def tsum(x, axis=None, keepdims: bool = False) -> Tensor:
    x = _as_tensor(x)
    axes = _norm_axes(axis, x.ndim)
    out = x.data.sum(axis=axes, keepdims=keepdims)
    _count(x.size)

    def bwd(g):
        if not keepdims:
            g = np.expand_dims(g, axes)
        return (np.broadcast_to(g, x.shape).copy(),)

    return _make("sum", (x,), np.asarray(out), bwd)


def tmean(x, axis=None, keepdims: bool = False) -> Tensor:
    x = _as_tensor(x)
    axes = _norm_axes(axis, x.ndim)
    count = math.prod(x.shape[a] for a in axes) if axes else 1
    out = x.data.mean(axis=axes, keepdims=keepdims)
    _count(x.size + np.asarray(out).size)

    def bwd(g):
        if not keepdims:
            g = np.expand_dims(g, axes)
        return (np.broadcast_to(g / count, x.shape).copy(),)

    return _make("mean", (x,), np.asarray(out), bwd)


def reshape(x, shape) -> Tensor:
    x = _as_tensor(x)
    out = x.data.reshape(shape)

    def bwd(g):
        return (g.reshape(x.shape),)

    return _make("reshape", (x,), out, bwd)


def transpose(x, axes=None) -> Tensor:
    x = _as_tensor(x)
    if axes is None:
        axes = tuple(reversed(range(x.ndim)))
    axes = tuple(a % x.ndim for a in axes)
    inverse = tuple(np.argsort(axes))
    out = x.data.transpose(axes)

    def bwd(g):
        return (g.transpose(inverse),)

    return _make("transpose", (x,), out, bwd)


def concat(tensors: Sequence, axis: int = 0) -> Tensor:
    ts = tuple(_as_tensor(t) for t in tensors)
    if not ts:
        raise UsageError("concat needs at least one tensor")
    out = np.concatenate([t.data for t in ts], axis=axis)
    ax = axis % out.ndim
    sizes = [t.shape[ax] for t in ts]
    offsets = np.cumsum(sizes)[:-1]

    def bwd(g):
        return tuple(np.split(g, offsets, axis=ax))

    return _make("concat", ts, out, bwd)


def slice_axis(x, axis: int, start: int, stop: int) -> Tensor:
    """Contiguous slice [start, stop) along one axis."""
    x = _as_tensor(x)
    ax = axis % x.ndim
    sl = (slice(None),) * ax + (slice(start, stop),)
    out = x.data[sl].copy()

    def bwd(g):
        gx = np.zeros(x.shape)
        gx[sl] = g
        return (gx,)

    return _make("slice", (x,), out, bwd)


# ---------------------------------------------------------------------------
# Backward pass and gradient checking
# ---------------------------------------------------------------------------

def backward(loss: Tensor, *, retain_tape: bool = False) -> None:
    """Populate ``grad`` on every requires-grad leaf reachable from `loss`.

    `loss` must be a scalar produced through recorded ops (or itself a
    leaf).  Gradients of tensors used several times accumulate additively;
    leaf ``grad`` slots also accumulate across successive backward calls.
    The tape is cleared afterwards unless `retain_tape` is set.
    """
    if not isinstance(loss, Tensor):
        raise UsageError("backward expects a Tensor")
    if loss.size != 1:
        raise UsageError(
            f"backward requires a scalar loss, got shape {loss.shape}")
    tape = _STATE.tape
    grads: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
    holders: dict[int, Tensor] = {id(loss): loss}
    for node in reversed(tape.nodes):
        g = grads.pop(id(node.output), None)
        holders.pop(id(node.output), None)
        if g is None:
            continue
        for t, gin in zip(node.inputs, node.backward_fn(g)):
            if gin is None or not t.requires_grad:
                continue
            key = id(t)
            if key in grads:
                grads[key] = grads[key] + gin
            else:
                grads[key] = gin
                holders[key] = t
    for key, t in holders.items():
        if t.requires_grad:
            g = grads[key]
            t.grad = g.copy() if t.grad is None else t.grad + g
    if not retain_tape:
        tape.clear()


@dataclass
class GradCheckReport:
    max_rel_error: float
    max_abs_error: float
    entries_checked: int
    tol: float

    @property
    def passed(self) -> bool:
        return self.max_rel_error <= self.tol


def grad_check(f, x: Tensor, h: float = 1e-5, tol: float = 1e-4,
               max_entries: int | None = None,
               rng: np.random.Generator | None = None) -> GradCheckReport:
    """Compare the autodiff gradient of scalar-valued `f` against central
    finite differences at `x`.

    The relative error is ``max|g_ad - g_fd|`` over the checked entries,
    normalized by ``max(1, |g_ad|_inf, |g_fd|_inf)`` so near-zero gradients
    are judged on absolute error.  For large tensors a seeded random subset
    of `max_entries` coordinates keeps the cost bounded.
    """
    base = Tensor(x.data.copy(), requires_grad=True)
    out = f(base)
    if not isinstance(out, Tensor) or out.size != 1:
        raise UsageError("grad_check requires f to return a scalar Tensor")
    backward(out)
    g_ad = np.zeros(base.shape) if base.grad is None else base.grad

    n = x.size
    if max_entries is not None and max_entries < n:
        rng = rng or np.random.default_rng(0)
        idx = rng.choice(n, size=max_entries, replace=False)
    else:
        idx = np.arange(n)

    flat = x.data.reshape(-1)
    fd = np.empty(len(idx))
    with no_grad():
        for j, i in enumerate(idx):
            pert = flat.copy()
            pert[i] = flat[i] + h
            fp = f(Tensor(pert.reshape(x.shape))).item()
            pert[i] = flat[i] - h
            fm = f(Tensor(pert.reshape(x.shape))).item()
            fd[j] = (fp - fm) / (2.0 * h)

    ad = g_ad.reshape(-1)[idx]
    max_abs = float(np.max(np.abs(ad - fd))) if len(idx) else 0.0
    scale = max(1.0, float(np.max(np.abs(ad))) if len(idx) else 0.0,
                float(np.max(np.abs(fd))) if len(idx) else 0.0)
    return GradCheckReport(max_rel_error=max_abs / scale,
                           max_abs_error=max_abs,
                           entries_checked=len(idx), tol=tol)
