"""Selective state-space scan and the Mamba block.

Discretization (per time step ``t``, channel ``c``, state index ``k``)::

    dt      = softplus(u_t @ W_delta + b_delta)[c]
    s[c,k]  = exp(dt * A[c,k]) * s[c,k] + dt * B(u_t)[k] * u_t[c]
    y_t[c]  = sum_k C(u_t)[k] * s[c,k] + D[c] * u_t[c]

with ``A = -exp(A_log) < 0``, so every decay factor lies in (0, 1).
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import NonFiniteError, ShapeError, StateBoundError, StateFormatError
from .numerics import ops
from .numerics.audit import track
from .numerics.kernels import scan_backward, scan_forward
from .numerics.rng import Rng, conv_init, dense_init
from .numerics.tape import tape_of, value_of

DEFAULT_STATE_BOUND = 1e3


@dataclass(frozen=True, eq=False)
class MambaLayerParams:
    in_w: np.ndarray      # d_h x 2d_h  (value | gate)
    in_b: np.ndarray      # 2d_h
    conv: np.ndarray      # d_h x k depthwise
    delta_w: np.ndarray   # d_h x d_h
    delta_b: np.ndarray   # d_h
    a_log: np.ndarray     # d_h x d_ssm
    b_w: np.ndarray       # d_h x d_ssm
    c_w: np.ndarray       # d_h x d_ssm
    d_skip: np.ndarray    # d_h
    out_w: np.ndarray     # d_h x d_h
    out_b: np.ndarray     # d_h
    state_bound: float = DEFAULT_STATE_BOUND

    @property
    def d_h(self) -> int:
        return value_of(self.a_log).shape[0]

    @property
    def d_ssm(self) -> int:
        return value_of(self.a_log).shape[1]

    @property
    def k(self) -> int:
        return value_of(self.conv).shape[1]

    def validate(self) -> "MambaLayerParams":
        d_h, n, k = self.d_h, self.d_ssm, self.k
        expected = {
            "in_w": (d_h, 2 * d_h), "in_b": (2 * d_h,), "conv": (d_h, k),
            "delta_w": (d_h, d_h), "delta_b": (d_h,), "a_log": (d_h, n),
            "b_w": (d_h, n), "c_w": (d_h, n), "d_skip": (d_h,),
            "out_w": (d_h, d_h), "out_b": (d_h,),
        }
        for name, shape in expected.items():
            got = value_of(getattr(self, name)).shape
            if got != shape:
                raise ShapeError(f"MambaLayerParams.{name} has shape {got}, expected {shape}")
        return self


def init_mamba_layer(rng: Rng, d_h: int, d_ssm: int = 96, k: int = 5,
                     state_bound: float = DEFAULT_STATE_BOUND) -> MambaLayerParams:
    # S4/Mamba-style A init: decay rates 1..d_ssm in every channel.
    a_log = np.log(np.tile(np.linspace(1.0, float(d_ssm), d_ssm), (d_h, 1)))
    return MambaLayerParams(
        in_w=dense_init(rng, d_h, 2 * d_h),
        in_b=np.zeros(2 * d_h),
        conv=conv_init(rng, d_h, k),
        delta_w=dense_init(rng, d_h, d_h),
        delta_b=np.zeros(d_h),
        a_log=a_log,
        b_w=dense_init(rng, d_h, d_ssm),
        c_w=dense_init(rng, d_h, d_ssm),
        d_skip=np.ones(d_h),
        out_w=dense_init(rng, d_h, d_h),
        out_b=np.zeros(d_h),
        state_bound=state_bound,
    )


@dataclass(frozen=True, eq=False)
class StreamState:
    """Recurrent state of one layer between chunks."""

    ssm_state: np.ndarray   # d_h x d_ssm
    conv_tail: np.ndarray   # (k - 1) x d_h, most recent conv inputs last
    frames_seen: int = 0

    @property
    def d_h(self) -> int:
        return self.ssm_state.shape[0]

    @property
    def d_ssm(self) -> int:
        return self.ssm_state.shape[1]

    @property
    def k(self) -> int:
        return self.conv_tail.shape[0] + 1

    @property
    def num_elements(self) -> int:
        return self.ssm_state.size + self.conv_tail.size


def zero_state(params: MambaLayerParams) -> StreamState:
    return StreamState(
        ssm_state=np.zeros((params.d_h, params.d_ssm)),
        conv_tail=np.zeros((params.k - 1, params.d_h)),
        frames_seen=0,
    )


def _check_state(state: StreamState, params: MambaLayerParams) -> None:
    if state.ssm_state.shape != (params.d_h, params.d_ssm):
        raise ShapeError(
            f"state ssm_state is {state.ssm_state.shape}, layer needs {(params.d_h, params.d_ssm)}"
        )
    if state.conv_tail.shape != (params.k - 1, params.d_h):
        raise ShapeError(
            f"state conv_tail is {state.conv_tail.shape}, layer needs {(params.k - 1, params.d_h)}"
        )


def _scan_core(u, delta, a, b, c, d, s0: np.ndarray, bound: float):
    uv, dv, av, bv, cv, dd = (np.ascontiguousarray(value_of(t)) for t in (u, delta, a, b, c, d))
    differentiable = tape_of(u, delta, a, b, c, d) is not None
    y, s_final, states, bad_t, bad_c = scan_forward(
        uv, dv, av, bv, cv, dd, np.ascontiguousarray(s0), float(bound), differentiable
    )
    if bad_t >= 0:
        # Kernel stops at the first offending step; rerun it to report the value.
        _, s_bad, _, _, _ = scan_forward(
            uv[: bad_t + 1], dv[: bad_t + 1], av, bv[: bad_t + 1], cv[: bad_t + 1], dd,
            np.ascontiguousarray(s0), np.inf, False,
        )
        value = float(np.max(np.abs(s_bad[bad_c])))
        raise StateBoundError(int(bad_t), int(bad_c), value, bound)
    track(y)
    track(s_final)

    def backward(g):
        gu, gdelta, ga, gb, gc, gd, _ = scan_backward(
            np.ascontiguousarray(g), uv, dv, av, bv, cv, dd, states
        )
        return gu, gdelta, ga, gb, gc, gd

    tape = tape_of(u, delta, a, b, c, d)
    if tape is None:
        return y, s_final
    return tape.record(y, (u, delta, a, b, c, d), backward), s_final


def selective_scan(u, params: MambaLayerParams, state: StreamState | None = None):
    """Run the scan over ``u`` (T x d_h). Returns ``(y, final_state)``.

    The final state is a plain value; gradients do not flow through it.
    """
    uv = value_of(u)
    if uv.ndim != 2 or uv.shape[1] != params.d_h:
        raise ShapeError(f"scan input {uv.shape} does not match d_h={params.d_h}")
    if not np.isfinite(uv).all():
        raise NonFiniteError("selective_scan input contains NaN or Inf")
    if state is None:
        state = zero_state(params)
    else:
        _check_state(state, params)
    delta = ops.softplus(ops.linear(u, params.delta_w, params.delta_b))
    b = ops.linear(u, params.b_w)
    c = ops.linear(u, params.c_w)
    a = ops.neg(ops.exp(params.a_log))
    y, s_final = _scan_core(u, delta, a, b, c, params.d_skip, state.ssm_state, params.state_bound)
    new_state = StreamState(s_final, state.conv_tail, state.frames_seen + uv.shape[0])
    return y, new_state


def mamba_block(x, params: MambaLayerParams, padding: str = "causal",
                state: StreamState | None = None):
    """in_proj -> (conv -> SiLU -> scan) * SiLU(gate) -> out_proj, plus residual."""
    if state is not None and padding != "causal":
        raise ValueError("streaming state requires causal padding; 'same' looks into the future")
    xv = value_of(x)
    d_h = params.d_h
    if xv.ndim != 2 or xv.shape[1] != d_h:
        raise ShapeError(f"mamba_block input {xv.shape} does not match d_h={d_h}")
    if state is not None:
        _check_state(state, params)
    xz = ops.linear(x, params.in_w, params.in_b)
    v = ops.slice_cols(xz, 0, d_h)
    z = ops.slice_cols(xz, d_h, 2 * d_h)
    tail = state.conv_tail if state is not None else None
    u = ops.silu(ops.depthwise_conv1d(v, params.conv, padding, tail=tail))
    y, scanned = selective_scan(u, params, state)
    out = ops.add(ops.linear(ops.mul(y, ops.silu(z)), params.out_w, params.out_b), x)

    k = params.k
    prev_tail = tail if tail is not None else np.zeros((k - 1, d_h))
    history = np.concatenate([prev_tail, value_of(v)], axis=0)
    new_tail = track(np.ascontiguousarray(history[history.shape[0] - (k - 1):]))
    frames = (state.frames_seen if state is not None else 0) + xv.shape[0]
    return out, StreamState(scanned.ssm_state, new_tail, frames)


def run_stack(x, layers: Sequence[MambaLayerParams], padding: str = "causal",
              states: Sequence[StreamState] | None = None):
    """Chain blocks; returns ``(h, final_states)``."""
    h = x
    out_states = []
    for i, layer in enumerate(layers):
        h, st = mamba_block(h, layer, padding, None if states is None else states[i])
        out_states.append(st)
    return h, out_states


def _as_stack(p) -> tuple:
    return (p,) if isinstance(p, MambaLayerParams) else tuple(p)


def bidirectional_scan(x, fwd_params, bwd_params, padding: str = "causal"):
    """Forward run and time-reversed backward run with independent params.

    Each side may be a single layer or a sequence of layers.
    """
    if value_of(x).shape[0] < 1:
        raise ShapeError("bidirectional_scan needs at least one time step")
    h_f, _ = run_stack(x, _as_stack(fwd_params), padding)
    h_b_rev, _ = run_stack(ops.reverse_rows(x), _as_stack(bwd_params), padding)
    return h_f, ops.reverse_rows(h_b_rev)


# --- serialization -----------------------------------------------------------

STATE_MAGIC = b"MVST"
_STATE_HEADER = struct.Struct("<4sIIIIQ")
# version 1: float32 payload; version 2: float64 payload (exact resume).
_STATE_DTYPES = {1: "<f4", 2: "<f8"}


def save_state(state: StreamState, version: int = 2) -> bytes:
    if version not in _STATE_DTYPES:
        raise StateFormatError(f"unknown state version {version}")
    header = _STATE_HEADER.pack(
        STATE_MAGIC, version, state.d_h, state.d_ssm, state.k, int(state.frames_seen)
    )
    dtype = _STATE_DTYPES[version]
    return (
        header
        + np.ascontiguousarray(state.ssm_state, dtype=dtype).tobytes()
        + np.ascontiguousarray(state.conv_tail, dtype=dtype).tobytes()
    )


def restore_state(blob: bytes, params: MambaLayerParams | None = None) -> StreamState:
    if len(blob) < _STATE_HEADER.size or blob[:4] != STATE_MAGIC:
        raise StateFormatError("not a serialized StreamState (bad magic or short header)")
    _, version, d_h, d_ssm, k, frames = _STATE_HEADER.unpack_from(blob, 0)
    if version not in _STATE_DTYPES:
        raise StateFormatError(f"unsupported state version {version}")
    if params is not None and (d_h, d_ssm, k) != (params.d_h, params.d_ssm, params.k):
        raise StateFormatError(
            f"state shape (d_h={d_h}, d_ssm={d_ssm}, k={k}) does not match layer "
            f"(d_h={params.d_h}, d_ssm={params.d_ssm}, k={params.k})"
        )
    dtype = np.dtype(_STATE_DTYPES[version])
    n_state, n_tail = d_h * d_ssm, (k - 1) * d_h
    need = _STATE_HEADER.size + (n_state + n_tail) * dtype.itemsize
    if len(blob) != need:
        raise StateFormatError(f"state payload has {len(blob)} bytes, expected {need}")
    payload = np.frombuffer(blob, dtype=dtype, offset=_STATE_HEADER.size).astype(np.float64)
    return StreamState(
        ssm_state=payload[:n_state].reshape(d_h, d_ssm).copy(),
        conv_tail=payload[n_state:].reshape(k - 1, d_h).copy(),
        frames_seen=int(frames),
    )
