"""Minimal dense-tensor math with reverse-mode differentiation.

A :class:`Tensor` wraps a C-contiguous float64 ndarray and is treated as
immutable after construction. Operations optionally record themselves on
a :class:`Tape`; :func:`gradient` replays the tape backwards to produce
vector-Jacobian products for any set of leaf tensors. Passing
``tape=None`` to an op skips recording, which is how inference runs
without bookkeeping overhead.

The op set is exactly what the attention network needs: broadcast
arithmetic, (batched) matmul, relu, row softmax, row layer norm, shape
moves and reductions. No general broadcasting rules beyond numpy's, no
in-place updates, no higher-order gradients.
"""

import numpy as np

from . import kernels
from .errors import ContractError


class Tensor:
    """Immutable float64 array value participating in taped computation."""

    __slots__ = ("data",)

    def __init__(self, data):
        arr = np.asarray(data, dtype=np.float64)
        if arr.ndim > 0 and not arr.flags["C_CONTIGUOUS"]:
            arr = np.ascontiguousarray(arr)
        self.data = arr

    @property
    def shape(self):
        return self.data.shape

    def __repr__(self):
        return f"Tensor(shape={self.data.shape})"


class Tape:
    """Ordered record of primitive ops for one differentiable computation.

    Nodes are appended in execution order, so the reversed list is a
    valid reverse-topological order and each node is visited exactly
    once during :func:`gradient`.
    """

    __slots__ = ("nodes",)

    def __init__(self):
        self.nodes = []

    def record(self, out, inputs, vjps):
        self.nodes.append((out, inputs, vjps))

    def __len__(self):
        return len(self.nodes)


def _as_tensor(x):
    return x if isinstance(x, Tensor) else Tensor(x)


def _reduce_to_shape(grad, shape):
    """Sum out axes that numpy broadcasting expanded, so ``grad`` matches
    the original operand ``shape``."""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    keep = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if keep:
        grad = grad.sum(axis=keep, keepdims=True)
    return grad


# -- arithmetic ---------------------------------------------------------------

def add(a, b, tape=None):
    a, b = _as_tensor(a), _as_tensor(b)
    out = Tensor(a.data + b.data)
    if tape is not None:
        tape.record(out, (a, b), (
            lambda g: _reduce_to_shape(g, a.data.shape),
            lambda g: _reduce_to_shape(g, b.data.shape),
        ))
    return out


def sub(a, b, tape=None):
    a, b = _as_tensor(a), _as_tensor(b)
    out = Tensor(a.data - b.data)
    if tape is not None:
        tape.record(out, (a, b), (
            lambda g: _reduce_to_shape(g, a.data.shape),
            lambda g: _reduce_to_shape(-g, b.data.shape),
        ))
    return out


def mul(a, b, tape=None):
    a, b = _as_tensor(a), _as_tensor(b)
    out = Tensor(a.data * b.data)
    if tape is not None:
        tape.record(out, (a, b), (
            lambda g: _reduce_to_shape(g * b.data, a.data.shape),
            lambda g: _reduce_to_shape(g * a.data, b.data.shape),
        ))
    return out


def scale(a, c, tape=None):
    """Multiply by a python-float constant (not differentiated through)."""
    a = _as_tensor(a)
    c = float(c)
    out = Tensor(a.data * c)
    if tape is not None:
        tape.record(out, (a,), (lambda g: g * c,))
    return out


def square(a, tape=None):
    a = _as_tensor(a)
    out = Tensor(a.data * a.data)
    if tape is not None:
        tape.record(out, (a,), (lambda g: 2.0 * g * a.data,))
    return out


def matmul(a, b, tape=None):
    """Matrix product with numpy's stacked-matmul broadcasting."""
    a, b = _as_tensor(a), _as_tensor(b)
    out = Tensor(np.matmul(a.data, b.data))

    if tape is not None:
        def grad_a(g):
            ga = np.matmul(g, b.data.swapaxes(-1, -2))
            return _reduce_to_shape(ga, a.data.shape)

        def grad_b(g):
            gb = np.matmul(a.data.swapaxes(-1, -2), g)
            return _reduce_to_shape(gb, b.data.shape)

        tape.record(out, (a, b), (grad_a, grad_b))
    return out


def relu(a, tape=None):
    a = _as_tensor(a)
    out = Tensor(np.maximum(a.data, 0.0))
    if tape is not None:
        mask = a.data > 0.0
        tape.record(out, (a,), (lambda g: g * mask,))
    return out


# -- normalization ------------------------------------------------------------

def softmax_last(a, tape=None):
    """Stabilized softmax along the last axis, any leading shape."""
    a = _as_tensor(a)
    cols = a.data.shape[-1]
    rows2d = np.ascontiguousarray(a.data.reshape(-1, cols))
    y2d = kernels.softmax_rows(rows2d)
    out = Tensor(y2d.reshape(a.data.shape))
    if tape is not None:
        def backward(g):
            g2d = np.ascontiguousarray(g.reshape(-1, cols))
            return kernels.softmax_rows_backward(y2d, g2d).reshape(a.data.shape)

        tape.record(out, (a,), (backward,))
    return out


LAYERNORM_EPS = 1e-5


def layer_norm(a, gain, bias, tape=None, eps=LAYERNORM_EPS):
    """Normalize the last axis to zero mean / unit variance, then apply
    elementwise ``gain`` and ``bias`` (both 1-D of that axis length)."""
    a, gain, bias = _as_tensor(a), _as_tensor(gain), _as_tensor(bias)
    cols = a.data.shape[-1]
    rows2d = np.ascontiguousarray(a.data.reshape(-1, cols))
    y2d, xhat, rstd = kernels.layernorm_rows(rows2d, gain.data, bias.data, eps)
    out = Tensor(y2d.reshape(a.data.shape))
    if tape is not None:
        def grad_x(g):
            g2d = np.ascontiguousarray(g.reshape(-1, cols))
            gx, _, _ = kernels.layernorm_rows_backward(xhat, rstd, gain.data, g2d)
            return gx.reshape(a.data.shape)

        def grad_gain(g):
            g2d = np.ascontiguousarray(g.reshape(-1, cols))
            _, gg, _ = kernels.layernorm_rows_backward(xhat, rstd, gain.data, g2d)
            return gg

        def grad_bias(g):
            g2d = np.ascontiguousarray(g.reshape(-1, cols))
            return g2d.sum(axis=0)

        tape.record(out, (a, gain, bias), (grad_x, grad_gain, grad_bias))
    return out


# -- shape moves --------------------------------------------------------------

def reshape(a, shape, tape=None):
    a = _as_tensor(a)
    out = Tensor(a.data.reshape(shape))
    if tape is not None:
        orig = a.data.shape
        tape.record(out, (a,), (lambda g: g.reshape(orig),))
    return out


def transpose(a, axes, tape=None):
    a = _as_tensor(a)
    out = Tensor(a.data.transpose(axes))
    if tape is not None:
        inverse = tuple(np.argsort(axes))
        tape.record(out, (a,), (lambda g: g.transpose(inverse),))
    return out


def concat(tensors, axis, tape=None):
    tensors = [_as_tensor(t) for t in tensors]
    out = Tensor(np.concatenate([t.data for t in tensors], axis=axis))
    if tape is not None:
        sizes = [t.data.shape[axis] for t in tensors]
        offsets = np.cumsum([0] + sizes)

        def make_vjp(i):
            lo, hi = offsets[i], offsets[i + 1]

            def vjp(g):
                index = [slice(None)] * g.ndim
                index[axis] = slice(lo, hi)
                return g[tuple(index)]

            return vjp

        tape.record(out, tuple(tensors), tuple(make_vjp(i) for i in range(len(tensors))))
    return out


# -- reductions ---------------------------------------------------------------

def mean_axis(a, axis, tape=None):
    a = _as_tensor(a)
    out = Tensor(a.data.mean(axis=axis))
    if tape is not None:
        n = a.data.shape[axis]
        shape = a.data.shape

        def vjp(g):
            return np.broadcast_to(np.expand_dims(g / n, axis), shape).copy()

        tape.record(out, (a,), (vjp,))
    return out


def take_index(a, axis, index, tape=None):
    """Select one slice along ``axis`` (used for last-time-step pooling)."""
    a = _as_tensor(a)
    out = Tensor(np.take(a.data, index, axis=axis))
    if tape is not None:
        shape = a.data.shape

        def vjp(g):
            full = np.zeros(shape)
            sel = [slice(None)] * len(shape)
            sel[axis] = index
            full[tuple(sel)] = g
            return full

        tape.record(out, (a,), (vjp,))
    return out


def sum_all(a, tape=None):
    a = _as_tensor(a)
    out = Tensor(a.data.sum())
    if tape is not None:
        shape = a.data.shape
        tape.record(out, (a,), (lambda g: np.full(shape, g),))
    return out


# -- public numeric ops --------------------------------------------------------

def softmax(v):
    """Probability vector from raw scores, stabilized by max-subtraction.

    Accepts any array; softmax is taken along the last axis. Raises on
    non-finite input.
    """
    arr = np.asarray(v, dtype=np.float64)
    if arr.size == 0:
        raise ContractError("softmax of empty input")
    if not np.isfinite(arr).all():
        raise ContractError("softmax input must be finite")
    cols = arr.shape[-1] if arr.ndim > 0 else 1
    out = kernels.softmax_rows(np.ascontiguousarray(arr.reshape(-1, cols)))
    return out.reshape(arr.shape)


def gradient(loss, tape, wrt):
    """Backpropagate through ``tape`` from scalar ``loss``.

    Returns one gradient array per tensor in ``wrt``; tensors that do not
    influence the loss get a zero gradient of matching shape. The walk is
    a single reverse pass in recorded order, so repeated calls on the
    same tape are bit-identical.
    """
    if not isinstance(loss, Tensor):
        raise ContractError("loss must be a Tensor")
    if loss.data.size != 1:
        raise ContractError(f"loss must be scalar, got shape {loss.data.shape}")

    grads = {id(loss): np.ones_like(loss.data)}
    for out, inputs, vjps in reversed(tape.nodes):
        g_out = grads.get(id(out))
        if g_out is None:
            continue
        for inp, vjp in zip(inputs, vjps):
            contribution = vjp(g_out)
            key = id(inp)
            existing = grads.get(key)
            if existing is None:
                grads[key] = contribution
            else:
                grads[key] = existing + contribution

    result = []
    for p in wrt:
        g = grads.get(id(p))
        result.append(np.zeros_like(p.data) if g is None else np.asarray(g))
    return result
