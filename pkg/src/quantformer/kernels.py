"""Hot numeric kernels with a numba fast path and a pure-numpy fallback.

Every kernel exists twice: ``*_np`` (vectorized numpy) and ``*_nb``
(numba ``@njit`` loops). The active implementation is chosen once at
import time: numba is used when it is importable and the environment
variable ``QUANTFORMER_NUMBA`` is not set to ``0``/``false``/``off``.
Within one process the choice is fixed, so repeated runs are
bit-reproducible. ``benchmarks/bench_kernels.py`` times both paths.

All kernels take C-contiguous float64 arrays; callers reshape
higher-rank tensors to the 2-D row layout these functions expect.
"""

import math
import os
import warnings

import numpy as np

_env = os.environ.get("QUANTFORMER_NUMBA", "1").strip().lower()
_numba_requested = _env not in {"0", "false", "off", "no"}

try:
    from numba import njit

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - exercised only without numba installed
    HAVE_NUMBA = False

    def njit(*args, **kwargs):
        def wrap(fn):
            return fn

        if args and callable(args[0]):
            return args[0]
        return wrap


if _numba_requested and not HAVE_NUMBA:  # pragma: no cover
    warnings.warn("numba not available; falling back to pure numpy kernels")

USE_NUMBA = _numba_requested and HAVE_NUMBA


# -- softmax over rows -------------------------------------------------------

def softmax_rows_np(x):
    shifted = x - x.max(axis=1, keepdims=True)
    out = np.exp(shifted)
    out /= out.sum(axis=1, keepdims=True)
    return out


@njit(cache=True)
def softmax_rows_nb(x):
    rows, cols = x.shape
    out = np.empty((rows, cols))
    for i in range(rows):
        m = x[i, 0]
        for j in range(1, cols):
            if x[i, j] > m:
                m = x[i, j]
        total = 0.0
        for j in range(cols):
            e = math.exp(x[i, j] - m)
            out[i, j] = e
            total += e
        inv = 1.0 / total
        for j in range(cols):
            out[i, j] *= inv
    return out


def softmax_rows_backward_np(y, grad):
    inner = (grad * y).sum(axis=1, keepdims=True)
    return y * (grad - inner)


@njit(cache=True)
def softmax_rows_backward_nb(y, grad):
    rows, cols = y.shape
    out = np.empty((rows, cols))
    for i in range(rows):
        inner = 0.0
        for j in range(cols):
            inner += grad[i, j] * y[i, j]
        for j in range(cols):
            out[i, j] = y[i, j] * (grad[i, j] - inner)
    return out


# -- layer normalization over rows -------------------------------------------

def layernorm_rows_np(x, gain, bias, eps):
    mean = x.mean(axis=1, keepdims=True)
    centered = x - mean
    var = (centered * centered).mean(axis=1, keepdims=True)
    rstd = 1.0 / np.sqrt(var + eps)
    xhat = centered * rstd
    return xhat * gain + bias, xhat, rstd[:, 0]


@njit(cache=True)
def layernorm_rows_nb(x, gain, bias, eps):
    rows, cols = x.shape
    out = np.empty((rows, cols))
    xhat = np.empty((rows, cols))
    rstd = np.empty(rows)
    for i in range(rows):
        mean = 0.0
        for j in range(cols):
            mean += x[i, j]
        mean /= cols
        var = 0.0
        for j in range(cols):
            d = x[i, j] - mean
            var += d * d
        var /= cols
        r = 1.0 / math.sqrt(var + eps)
        rstd[i] = r
        for j in range(cols):
            h = (x[i, j] - mean) * r
            xhat[i, j] = h
            out[i, j] = h * gain[j] + bias[j]
    return out, xhat, rstd


def layernorm_rows_backward_np(xhat, rstd, gain, grad):
    ggain = (grad * xhat).sum(axis=0)
    gbias = grad.sum(axis=0)
    gxhat = grad * gain
    m1 = gxhat.mean(axis=1, keepdims=True)
    m2 = (gxhat * xhat).mean(axis=1, keepdims=True)
    gx = rstd[:, None] * (gxhat - m1 - xhat * m2)
    return gx, ggain, gbias


@njit(cache=True)
def layernorm_rows_backward_nb(xhat, rstd, gain, grad):
    rows, cols = xhat.shape
    gx = np.empty((rows, cols))
    ggain = np.zeros(cols)
    gbias = np.zeros(cols)
    for i in range(rows):
        m1 = 0.0
        m2 = 0.0
        for j in range(cols):
            g = grad[i, j]
            ggain[j] += g * xhat[i, j]
            gbias[j] += g
            gh = g * gain[j]
            m1 += gh
            m2 += gh * xhat[i, j]
        m1 /= cols
        m2 /= cols
        for j in range(cols):
            gh = grad[i, j] * gain[j]
            gx[i, j] = rstd[i] * (gh - m1 - xhat[i, j] * m2)
    return gx, ggain, gbias


# -- Adam parameter update ----------------------------------------------------

def adam_update_np(p, g, m, v, lr, beta1, beta2, eps, bc1, bc2):
    m_new = beta1 * m + (1.0 - beta1) * g
    v_new = beta2 * v + (1.0 - beta2) * g * g
    step = lr * (m_new / bc1) / (np.sqrt(v_new / bc2) + eps)
    return p - step, m_new, v_new


@njit(cache=True)
def adam_update_nb(p, g, m, v, lr, beta1, beta2, eps, bc1, bc2):
    n = p.shape[0]
    p_new = np.empty(n)
    m_new = np.empty(n)
    v_new = np.empty(n)
    for i in range(n):
        mi = beta1 * m[i] + (1.0 - beta1) * g[i]
        vi = beta2 * v[i] + (1.0 - beta2) * g[i] * g[i]
        m_new[i] = mi
        v_new[i] = vi
        p_new[i] = p[i] - lr * (mi / bc1) / (math.sqrt(vi / bc2) + eps)
    return p_new, m_new, v_new


# -- running-peak drawdown scan -----------------------------------------------

def max_drawdown_np(values):
    peaks = np.maximum.accumulate(values)
    return float(((peaks - values) / peaks).max())


@njit(cache=True)
def max_drawdown_nb(values):
    peak = values[0]
    worst = 0.0
    for i in range(values.shape[0]):
        if values[i] > peak:
            peak = values[i]
        dd = (peak - values[i]) / peak
        if dd > worst:
            worst = dd
    return worst


if USE_NUMBA:
    softmax_rows = softmax_rows_nb
    softmax_rows_backward = softmax_rows_backward_nb
    layernorm_rows = layernorm_rows_nb
    layernorm_rows_backward = layernorm_rows_backward_nb
    adam_update = adam_update_nb
    max_drawdown_scan = max_drawdown_nb
else:
    softmax_rows = softmax_rows_np
    softmax_rows_backward = softmax_rows_backward_np
    layernorm_rows = layernorm_rows_np
    layernorm_rows_backward = layernorm_rows_backward_np
    adam_update = adam_update_np
    max_drawdown_scan = max_drawdown_np
