"""Compiled loops with a fixed accumulation order.

Every kernel computes each output row from that row's inputs alone, always
summing in the same order. A row therefore comes out bitwise identical
whether it is processed alone or inside a longer block, which the streaming
runtime depends on. BLAS does not give that guarantee: single-row products
dispatch to gemv and round differently from gemm.
"""

from __future__ import annotations

import math

import numba
import numpy as np

_jit = numba.njit(cache=True, nogil=True)


@_jit
def matmul_rows(x, w):
    rows, inner = x.shape
    cols = w.shape[1]
    y = np.zeros((rows, cols))
    for t in range(rows):
        for j in range(inner):
            xv = x[t, j]
            for c in range(cols):
                y[t, c] += xv * w[j, c]
    return y


@_jit
def layer_norm_rows(x, eps):
    rows, cols = x.shape
    y = np.empty((rows, cols))
    inv_std = np.empty(rows)
    for t in range(rows):
        acc = 0.0
        for c in range(cols):
            acc += x[t, c]
        mean = acc / cols
        acc = 0.0
        for c in range(cols):
            d = x[t, c] - mean
            acc += d * d
        r = 1.0 / math.sqrt(acc / cols + eps)
        inv_std[t] = r
        for c in range(cols):
            y[t, c] = (x[t, c] - mean) * r
    return y, inv_std


@_jit
def scan_forward(u, delta, a, b, c, d, s0, bound, keep_states):
    """Sequential selective scan.

    ``a`` holds the (negative) continuous decay rates, shape (channels, state).
    Returns ``(y, s_final, states, bad_step, bad_channel)``; ``states`` has
    shape (T + 1, channels, state) when ``keep_states`` else (0, 0, 0), and
    ``bad_step`` is -1 unless some ``|s|`` exceeded ``bound``.
    """
    steps, channels = u.shape
    n = a.shape[1]
    y = np.empty((steps, channels))
    s = s0.copy()
    if keep_states:
        states = np.empty((steps + 1, channels, n))
        states[0] = s0
    else:
        states = np.empty((0, 0, 0))
    bad_step = -1
    bad_channel = -1
    for t in range(steps):
        for ch in range(channels):
            dt = delta[t, ch]
            uc = u[t, ch]
            acc = 0.0
            for k in range(n):
                sk = math.exp(dt * a[ch, k]) * s[ch, k] + dt * b[t, k] * uc
                s[ch, k] = sk
                acc += c[t, k] * sk
                if bad_step < 0 and abs(sk) > bound:
                    bad_step = t
                    bad_channel = ch
            y[t, ch] = acc + d[ch] * uc
        if keep_states:
            states[t + 1] = s
        if bad_step >= 0:
            break
    return y, s, states, bad_step, bad_channel


@_jit
def scan_backward(gy, u, delta, a, b, c, d, states):
    steps, channels = u.shape
    n = a.shape[1]
    gu = np.zeros((steps, channels))
    gdelta = np.zeros((steps, channels))
    ga = np.zeros((channels, n))
    gb = np.zeros((steps, n))
    gc = np.zeros((steps, n))
    gd = np.zeros(channels)
    lam = np.zeros((channels, n))
    for t in range(steps - 1, -1, -1):
        for ch in range(channels):
            g = gy[t, ch]
            dt = delta[t, ch]
            uc = u[t, ch]
            gd[ch] += g * uc
            gu_acc = g * d[ch]
            gdt_acc = 0.0
            for k in range(n):
                s_cur = states[t + 1, ch, k]
                s_prev = states[t, ch, k]
                gc[t, k] += g * s_cur
                # lam currently holds decay_{t+1} * adjoint_{t+1}
                lk = lam[ch, k] + g * c[t, k]
                decay = math.exp(dt * a[ch, k])
                gu_acc += lk * dt * b[t, k]
                gb[t, k] += lk * dt * uc
                gdt_acc += lk * (a[ch, k] * decay * s_prev + b[t, k] * uc)
                ga[ch, k] += lk * s_prev * decay * dt
                lam[ch, k] = lk * decay
            gu[t, ch] += gu_acc
            gdelta[t, ch] += gdt_acc
    return gu, gdelta, ga, gb, gc, gd, lam
