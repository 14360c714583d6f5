"""Dense float64 kernels behind the autodiff tape.

Two implementations share one contract: numba ``@njit`` loops, and a pure
numpy path.  Both sum in a fixed left-to-right order along the reduction axis
so results never depend on BLAS threading.  The numba path is used when numba
imports and ``LASER_VFL_NUMBA`` is not ``0``.

``benchmarks/bench_kernels.py`` times the two paths against each other.
"""

from __future__ import annotations

import os
from types import SimpleNamespace

import numpy as np

# ---------------------------------------------------------------- numpy path


def _np_matmul(a, b):
    out = np.zeros((a.shape[0], b.shape[1]))
    for l in range(a.shape[1]):
        out += a[:, l : l + 1] * b[l : l + 1, :]
    return out


def _np_matmul_tn(a, g):
    # a.T @ g, summed over rows of a in order
    out = np.zeros((a.shape[1], g.shape[1]))
    for i in range(a.shape[0]):
        out += a[i, :, None] * g[i, None, :]
    return out


def _np_matmul_nt(g, w):
    # g @ w.T, summed over columns of g in order
    out = np.zeros((g.shape[0], w.shape[0]))
    for j in range(g.shape[1]):
        out += g[:, j : j + 1] * w[None, :, j]
    return out


def _np_colsum(g):
    out = np.zeros(g.shape[1])
    for i in range(g.shape[0]):
        out += g[i]
    return out


def _np_add_bias(x, b):
    return x + b[None, :]


def _np_relu(x):
    return np.where(x > 0.0, x, 0.0)


def _np_relu_backward(x, g):
    return np.where(x > 0.0, g, 0.0)


def _np_softmax_xent(logits, labels):
    n, c = logits.shape
    m = logits.max(axis=1)
    shifted = logits - m[:, None]
    e = np.exp(shifted)
    s = np.zeros(n)
    for j in range(c):
        s += e[:, j]
    logs = np.log(s)
    rows = np.arange(n)
    per_row = logs - shifted[rows, labels]
    total = 0.0
    for i in range(n):
        total += per_row[i]
    grad = e / s[:, None]
    grad[rows, labels] -= 1.0
    grad /= n
    return total / n, grad


def _np_sq_error(pred, target):
    d = pred - target
    total = 0.0
    for v in (d * d).ravel():
        total += v
    return total / (2.0 * pred.shape[0]), d / pred.shape[0]


numpy_impl = SimpleNamespace(
    name="numpy",
    matmul=_np_matmul,
    matmul_tn=_np_matmul_tn,
    matmul_nt=_np_matmul_nt,
    colsum=_np_colsum,
    add_bias=_np_add_bias,
    relu=_np_relu,
    relu_backward=_np_relu_backward,
    softmax_xent=_np_softmax_xent,
    sq_error=_np_sq_error,
)

# ---------------------------------------------------------------- numba path


def _build_numba():
    from numba import njit

    @njit(cache=True)
    def matmul(a, b):
        n, k = a.shape
        m = b.shape[1]
        out = np.zeros((n, m))
        for i in range(n):
            for l in range(k):
                ail = a[i, l]
                for j in range(m):
                    out[i, j] += ail * b[l, j]
        return out

    @njit(cache=True)
    def matmul_tn(a, g):
        n, k = a.shape
        m = g.shape[1]
        out = np.zeros((k, m))
        for i in range(n):
            for l in range(k):
                ail = a[i, l]
                for j in range(m):
                    out[l, j] += ail * g[i, j]
        return out

    @njit(cache=True)
    def matmul_nt(g, w):
        n, m = g.shape
        k = w.shape[0]
        out = np.zeros((n, k))
        for i in range(n):
            for j in range(m):
                gij = g[i, j]
                for l in range(k):
                    out[i, l] += gij * w[l, j]
        return out

    @njit(cache=True)
    def colsum(g):
        n, m = g.shape
        out = np.zeros(m)
        for i in range(n):
            for j in range(m):
                out[j] += g[i, j]
        return out

    @njit(cache=True)
    def add_bias(x, b):
        n, m = x.shape
        out = np.empty((n, m))
        for i in range(n):
            for j in range(m):
                out[i, j] = x[i, j] + b[j]
        return out

    @njit(cache=True)
    def relu(x):
        out = np.empty_like(x)
        flat_in = x.ravel()
        flat_out = out.ravel()
        for i in range(flat_in.size):
            v = flat_in[i]
            flat_out[i] = v if v > 0.0 else 0.0
        return out

    @njit(cache=True)
    def relu_backward(x, g):
        out = np.empty_like(g)
        fx = x.ravel()
        fg = g.ravel()
        fo = out.ravel()
        for i in range(fx.size):
            fo[i] = fg[i] if fx[i] > 0.0 else 0.0
        return out

    @njit(cache=True)
    def softmax_xent(logits, labels):
        n, c = logits.shape
        grad = np.empty((n, c))
        total = 0.0
        for i in range(n):
            m = logits[i, 0]
            for j in range(1, c):
                if logits[i, j] > m:
                    m = logits[i, j]
            s = 0.0
            for j in range(c):
                e = np.exp(logits[i, j] - m)
                grad[i, j] = e
                s += e
            total += np.log(s) - (logits[i, labels[i]] - m)
            for j in range(c):
                grad[i, j] = grad[i, j] / s
            grad[i, labels[i]] -= 1.0
            for j in range(c):
                grad[i, j] /= n
        return total / n, grad

    @njit(cache=True)
    def sq_error(pred, target):
        n, m = pred.shape
        d = np.empty((n, m))
        total = 0.0
        for i in range(n):
            for j in range(m):
                v = pred[i, j] - target[i, j]
                d[i, j] = v / n
                total += v * v
        return total / (2.0 * n), d

    return SimpleNamespace(
        name="numba",
        matmul=matmul,
        matmul_tn=matmul_tn,
        matmul_nt=matmul_nt,
        colsum=colsum,
        add_bias=add_bias,
        relu=relu,
        relu_backward=relu_backward,
        softmax_xent=softmax_xent,
        sq_error=sq_error,
    )


try:
    numba_impl = _build_numba()
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba_impl = None


def _select():
    flag = os.environ.get("LASER_VFL_NUMBA", "1").strip().lower()
    if numba_impl is not None and flag not in ("0", "false", "no", "off"):
        return numba_impl
    return numpy_impl


active = _select()
BACKEND = active.name
