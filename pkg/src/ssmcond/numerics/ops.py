"""Differentiable primitives over SeqTensors.

Each op takes arrays or :class:`~ssmcond.numerics.tape.Var` handles and
returns the same kind. Forward paths that feed the streaming runtime avoid
BLAS (see :mod:`.kernels`); backward paths only run in training and use
plain numpy.
"""

from __future__ import annotations

import numpy as np

from ..config import EPS
from ..errors import ShapeError
from . import kernels
from .audit import track
from .tape import Var, tape_of, value_of


def _emit(value, parents, backward):
    track(value)
    tape = tape_of(*parents)
    if tape is None:
        return value
    return tape.record(value, parents, backward)


def _unbroadcast(g: np.ndarray, shape: tuple) -> np.ndarray:
    if g.shape == shape:
        return g
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, n in enumerate(shape):
        if n == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g


def _sigmoid(x):
    return np.exp(-np.logaddexp(0.0, -x))


# --- elementwise arithmetic -------------------------------------------------

def add(a, b):
    av, bv = value_of(a), value_of(b)
    out = av + bv
    return _emit(out, (a, b), lambda g: (_unbroadcast(g, np.shape(av)), _unbroadcast(g, np.shape(bv))))


def sub(a, b):
    av, bv = value_of(a), value_of(b)
    out = av - bv
    return _emit(out, (a, b), lambda g: (_unbroadcast(g, np.shape(av)), -_unbroadcast(g, np.shape(bv))))


def mul(a, b):
    av, bv = value_of(a), value_of(b)
    out = av * bv
    return _emit(
        out,
        (a, b),
        lambda g: (_unbroadcast(g * bv, np.shape(av)), _unbroadcast(g * av, np.shape(bv))),
    )


def neg(a):
    return _emit(-value_of(a), (a,), lambda g: (-g,))


def scale(a, c: float):
    return _emit(value_of(a) * c, (a,), lambda g: (g * c,))


# --- linear maps ------------------------------------------------------------

def linear(x, w, bias=None):
    """``y[t] = x[t] @ w + bias`` with a row-deterministic forward."""
    xv, wv = value_of(x), value_of(w)
    if xv.ndim != 2 or wv.ndim != 2 or xv.shape[1] != wv.shape[0]:
        raise ShapeError(
            f"linear: x is {xv.shape}, W is {wv.shape}; inner dims must match"
        )
    out = kernels.matmul_rows(np.ascontiguousarray(xv), np.ascontiguousarray(wv))
    if bias is not None:
        bv = value_of(bias)
        if bv.shape[-1] != wv.shape[1]:
            raise ShapeError(f"linear: bias {bv.shape} does not match output width {wv.shape[1]}")
        out += bv
        return _emit(
            out,
            (x, w, bias),
            lambda g: (g @ wv.T, xv.T @ g, _unbroadcast(g, bv.shape)),
        )
    return _emit(out, (x, w), lambda g: (g @ wv.T, xv.T @ g))


def matmul(a, b):
    """General product; BLAS-backed, not used on streaming paths."""
    av, bv = value_of(a), value_of(b)
    if av.shape[-1] != bv.shape[0]:
        raise ShapeError(f"matmul: {av.shape} @ {bv.shape}")
    return _emit(av @ bv, (a, b), lambda g: (g @ bv.T, av.T @ g))


def transpose(a):
    return _emit(np.ascontiguousarray(value_of(a).T), (a,), lambda g: (g.T,))


# --- nonlinearities ---------------------------------------------------------

def sigmoid(a):
    s = _sigmoid(value_of(a))
    return _emit(s, (a,), lambda g: (g * s * (1.0 - s),))


def silu(a):
    av = value_of(a)
    s = _sigmoid(av)
    return _emit(av * s, (a,), lambda g: (g * (s + av * s * (1.0 - s)),))


def softplus(a):
    av = value_of(a)
    return _emit(np.logaddexp(0.0, av), (a,), lambda g: (g * _sigmoid(av),))


def exp(a):
    out = np.exp(value_of(a))
    return _emit(out, (a,), lambda g: (g * out,))


def tanh(a):
    out = np.tanh(value_of(a))
    return _emit(out, (a,), lambda g: (g * (1.0 - out * out),))


def relu(a):
    av = value_of(a)
    mask = av > 0
    return _emit(np.where(mask, av, 0.0), (a,), lambda g: (g * mask,))


def abs_(a):
    av = value_of(a)
    return _emit(np.abs(av), (a,), lambda g: (g * np.sign(av),))


# --- normalization ----------------------------------------------------------

def layer_norm(x, eps: float = EPS):
    """Per-row standardization without affine parameters."""
    xv = value_of(x)
    if xv.ndim != 2 or xv.shape[1] < 1:
        raise ShapeError(f"layer_norm needs a T x c tensor with c >= 1, got {xv.shape}")
    y, inv_std = kernels.layer_norm_rows(np.ascontiguousarray(xv), float(eps))

    def backward(g):
        gm = g.mean(axis=1, keepdims=True)
        gy = (g * y).mean(axis=1, keepdims=True)
        return (inv_std[:, None] * (g - gm - y * gy),)

    return _emit(y, (x,), backward)


def softmax_rows(a):
    av = value_of(a)
    z = np.exp(av - av.max(axis=1, keepdims=True))
    p = z / z.sum(axis=1, keepdims=True)
    return _emit(p, (a,), lambda g: (p * (g - (g * p).sum(axis=1, keepdims=True)),))


# --- convolution ------------------------------------------------------------

def depthwise_conv1d(x, kernel, padding: str = "causal", tail=None):
    """Channel-wise 1-D convolution over time.

    ``causal`` left-pads ``k - 1`` rows (or uses ``tail``, the previous
    ``k - 1`` input rows of a stream); ``same`` pads ``(k - 1) / 2`` on both
    sides and needs odd ``k``. Output row ``t`` is
    ``sum_j kernel[:, j] * xpad[t + j]``.
    """
    xv, kv = value_of(x), value_of(kernel)
    if kv.ndim != 2:
        raise ShapeError(f"conv kernel must be channels x k, got {kv.shape}")
    c, k = kv.shape
    if k < 1:
        raise ValueError("conv kernel size must be >= 1")
    if xv.ndim != 2 or xv.shape[1] != c:
        raise ShapeError(f"conv input {xv.shape} does not match kernel channels {c}")
    steps = xv.shape[0]
    if padding == "causal":
        left, right = k - 1, 0
    elif padding == "same":
        if k % 2 == 0:
            raise ValueError(f"'same' padding needs an odd kernel, got k={k}")
        left = right = (k - 1) // 2
    else:
        raise ValueError(f"unknown padding {padding!r}")
    if tail is not None:
        if padding != "causal":
            raise ValueError("a conv tail only makes sense with causal padding")
        tail = np.asarray(tail, dtype=np.float64)
        if tail.shape != (k - 1, c):
            raise ShapeError(f"conv tail must be {(k - 1, c)}, got {tail.shape}")
        xpad = np.concatenate([tail, xv, np.zeros((right, c))], axis=0)
    else:
        xpad = np.concatenate([np.zeros((left, c)), xv, np.zeros((right, c))], axis=0)

    y = xpad[0:steps] * kv[:, 0]
    for j in range(1, k):
        y += xpad[j:j + steps] * kv[:, j]

    def backward(g):
        gpad = np.zeros_like(xpad)
        gk = np.empty_like(kv)
        for j in range(k):
            gpad[j:j + steps] += g * kv[:, j]
            gk[:, j] = (g * xpad[j:j + steps]).sum(axis=0)
        return gpad[left:left + steps], gk

    return _emit(y, (x, kernel), backward)


# --- shape plumbing ---------------------------------------------------------

def concat_cols(a, b):
    av, bv = value_of(a), value_of(b)
    if av.shape[0] != bv.shape[0]:
        raise ShapeError(f"concat_cols: row counts differ ({av.shape[0]} vs {bv.shape[0]})")
    na = av.shape[1]
    return _emit(np.concatenate([av, bv], axis=1), (a, b), lambda g: (g[:, :na], g[:, na:]))


def slice_cols(a, start: int, stop: int):
    av = value_of(a)

    def backward(g):
        out = np.zeros_like(av)
        out[:, start:stop] = g
        return (out,)

    return _emit(np.ascontiguousarray(av[:, start:stop]), (a,), backward)


def slice_rows(a, start: int, stop: int):
    av = value_of(a)

    def backward(g):
        out = np.zeros_like(av)
        out[start:stop] = g
        return (out,)

    return _emit(np.ascontiguousarray(av[start:stop]), (a,), backward)


def reverse_rows(a):
    return _emit(np.ascontiguousarray(value_of(a)[::-1]), (a,), lambda g: (g[::-1],))


def take_rows(a, idx):
    av = value_of(a)
    idx = np.asarray(idx, dtype=np.int64)

    def backward(g):
        out = np.zeros_like(av)
        np.add.at(out, idx, g)
        return (out,)

    return _emit(av[idx], (a,), backward)


def repeat_rows(v, rows: int):
    """Broadcast a 1 x c (or length-c) vector to ``rows`` identical rows."""
    vv = value_of(v)
    shape = vv.shape
    row = vv.reshape(1, -1)
    out = np.repeat(row, rows, axis=0)
    return _emit(out, (v,), lambda g: (g.sum(axis=0).reshape(shape),))


def reshape(a, shape):
    av = value_of(a)
    old = av.shape
    return _emit(np.ascontiguousarray(av).reshape(shape).copy(), (a,), lambda g: (g.reshape(old),))


def take_flat(a, start: int, shape: tuple):
    """View ``prod(shape)`` entries of a flat vector starting at ``start`` as ``shape``."""
    av = value_of(a)
    n = int(np.prod(shape)) if len(shape) else 1
    out = av[start:start + n].reshape(shape).copy()

    def backward(g):
        full = np.zeros_like(av)
        full[start:start + n] = np.reshape(g, -1)
        return (full,)

    return _emit(out, (a,), backward)


# --- reductions -------------------------------------------------------------

def sum_all(a):
    av = value_of(a)
    return _emit(np.asarray(av.sum()), (a,), lambda g: (np.full_like(av, float(g)),))


def mean_all(a):
    av = value_of(a)
    n = max(av.size, 1)
    return _emit(np.asarray(av.sum() / n), (a,), lambda g: (np.full_like(av, float(g) / n),))


def mean_rows(a):
    """Average over time: T x c -> 1 x c."""
    av = value_of(a)
    steps = av.shape[0]
    return _emit(av.mean(axis=0, keepdims=True), (a,), lambda g: (np.repeat(g / steps, steps, axis=0),))


def row_normalize(a):
    """Divide each row by its sum."""
    av = value_of(a)
    s = av.sum(axis=1, keepdims=True)
    y = av / s

    def backward(g):
        return ((g - (g * y).sum(axis=1, keepdims=True)) / s,)

    return _emit(y, (a,), backward)
