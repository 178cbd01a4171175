"""Finite look-ahead streaming over the causal (forward-only) text path.

Look-ahead is emission delay: frame ``j`` is released once input frame
``j + L`` has been fed, and its value is the causal pipeline's output at
position ``j + L``. Every layer therefore sees inputs up to ``j + L`` while
the computation itself stays causal, so chunking cannot change the result
and a session holds only per-layer states.
"""

from __future__ import annotations

import io
import math
import struct
from dataclasses import dataclass, field

import numpy as np

from .config import FRAMES_PER_SECOND
from .encoders import AdaLNParams, TextEncoderParams, adaln
from .errors import NonFiniteError, SessionClosedError, ShapeError
from .numerics import ops
from .numerics.rng import Rng
from .ssm import MambaLayerParams, StreamState, mamba_block, zero_state


@dataclass(frozen=True, eq=False)
class CausalEncoderParams:
    proj_w: np.ndarray
    proj_b: np.ndarray
    layers: tuple[MambaLayerParams, ...]
    adaln: AdaLNParams

    @classmethod
    def from_text_encoder(cls, p: TextEncoderParams) -> "CausalEncoderParams":
        """Forward-only view of a text encoder: projection, forward stack, AdaLN."""
        return cls(p.proj_w, p.proj_b, tuple(p.fwd), p.adaln)

    @property
    def d_in(self) -> int:
        return self.proj_w.shape[0]

    @property
    def d_h(self) -> int:
        return self.proj_w.shape[1]

    @property
    def d_s(self) -> int:
        return self.adaln.gamma_w.shape[0]


def lookahead_frames(seconds: float) -> int:
    if seconds < 0 or not math.isfinite(seconds):
        raise ValueError(f"look-ahead must be a finite non-negative duration, got {seconds}")
    return math.ceil(seconds * FRAMES_PER_SECOND)


def causal_forward(p: CausalEncoderParams, x, style, states=None):
    """Causal pipeline over ``x``; returns ``(y, new_states)``."""
    h = ops.linear(x, p.proj_w, p.proj_b)
    new_states = []
    for i, layer in enumerate(p.layers):
        h, st = mamba_block(h, layer, "causal", None if states is None else states[i])
        new_states.append(st)
    return adaln(h, style, p.adaln), new_states


def offline_stream(p: CausalEncoderParams, x: np.ndarray, lookahead: int, style=None) -> np.ndarray:
    """Single-pass reference: append ``L`` zero frames, run causally, drop the first ``L`` rows."""
    x = np.asarray(x, dtype=np.float64)
    if style is None:
        style = np.zeros(p.d_s)
    n = x.shape[0]
    if n == 0:
        return np.zeros((0, p.d_h))
    padded = np.concatenate([x, np.zeros((lookahead, x.shape[1]))], axis=0)
    y, _ = causal_forward(p, padded, style)
    return y[lookahead:lookahead + n]


@dataclass(eq=False)
class StreamSession:
    params: CausalEncoderParams
    lookahead: int
    style: np.ndarray
    states: list[StreamState] = field(default_factory=list)
    fed: int = 0
    emitted: int = 0
    closed: bool = False

    @property
    def pending(self) -> int:
        return self.fed - self.emitted

    def _run(self, chunk: np.ndarray) -> np.ndarray:
        y, self.states = causal_forward(self.params, chunk, self.style, self.states)
        # Row i of y is causal position self.fed + i, which releases frame self.fed + i - L.
        start = max(0, self.lookahead - self.fed)
        self.fed += chunk.shape[0]
        if start >= y.shape[0]:
            return np.zeros((0, self.params.d_h))
        return y[start:]

    def feed(self, chunk) -> np.ndarray:
        if self.closed:
            raise SessionClosedError("feed() on a closed session")
        chunk = np.asarray(chunk, dtype=np.float64)
        if chunk.ndim != 2 or chunk.shape[1] != self.params.d_in:
            raise ShapeError(f"chunk must be t x {self.params.d_in}, got {chunk.shape}")
        if not np.isfinite(chunk).all():
            raise NonFiniteError("stream chunk contains NaN or Inf")
        if chunk.shape[0] == 0:
            return np.zeros((0, self.params.d_h))
        out = self._run(chunk)
        self.emitted += out.shape[0]
        return out

    def close(self) -> np.ndarray:
        if self.closed:
            raise SessionClosedError("session already closed")
        self.closed = True
        if self.pending == 0:
            return np.zeros((0, self.params.d_h))
        # Truncated look-ahead at stream end: zero frames stand in for the future.
        fed = self.fed
        out = self._run(np.zeros((self.lookahead, self.params.d_in)))
        self.fed = fed
        self.emitted += out.shape[0]
        self.states = []
        return out


def open_session(params, lookahead_sec: float, style=None) -> StreamSession:
    if isinstance(params, TextEncoderParams):
        params = CausalEncoderParams.from_text_encoder(params)
    lookahead = lookahead_frames(lookahead_sec)
    return open_session_frames(params, lookahead, style)


def open_session_frames(params: CausalEncoderParams, lookahead: int, style=None) -> StreamSession:
    if lookahead < 0:
        raise ValueError(f"look-ahead must be >= 0 frames, got {lookahead}")
    if style is None:
        style = np.zeros(params.d_s)
    style = np.asarray(style, dtype=np.float64).reshape(-1)
    if style.shape != (params.d_s,):
        raise ShapeError(f"style vector must have {params.d_s} entries, got {style.shape}")
    states = [zero_state(layer) for layer in params.layers]
    return StreamSession(params, lookahead, style, states)


def feed(session: StreamSession, chunk) -> np.ndarray:
    return session.feed(chunk)


def close(session: StreamSession) -> np.ndarray:
    return session.close()


def run_stream(params: CausalEncoderParams, x: np.ndarray, lookahead: int, chunks, style=None) -> np.ndarray:
    """Feed ``x`` split at the given chunk sizes, then close; concatenated output."""
    session = open_session_frames(params, lookahead, style)
    outs = []
    pos = 0
    for size in chunks:
        outs.append(session.feed(x[pos:pos + size]))
        pos += size
    if pos != x.shape[0]:
        raise ValueError(f"chunk sizes cover {pos} frames, stream has {x.shape[0]}")
    outs.append(session.close())
    return np.concatenate(outs, axis=0)


# --- causality probe -----------------------------------------------------------------

@dataclass
class ProbeReport:
    trials: int
    lookahead: int
    passed: bool
    first_violation: tuple[int, int] | None = None   # (t0, first changed output frame)


def causality_probe(params: CausalEncoderParams, n_frames: int, lookahead: int, rng: Rng,
                    trials: int = 1, style=None) -> ProbeReport:
    """Perturb every input frame after ``t0 + L``; outputs up to ``t0`` must not move."""
    if n_frames <= lookahead + 2:
        raise ValueError(f"probe needs T > L + 2, got T={n_frames}, L={lookahead}")
    for _ in range(trials):
        t0 = int(rng.integers(0, n_frames - lookahead - 1))
        x = rng.normal((n_frames, params.d_in))
        x2 = x.copy()
        x2[t0 + lookahead + 1:] += rng.normal((n_frames - t0 - lookahead - 1, params.d_in))
        y = run_stream(params, x, lookahead, [n_frames], style)
        y2 = run_stream(params, x2, lookahead, [n_frames], style)
        same = (y[:t0 + 1] == y2[:t0 + 1]).all(axis=1)
        if not same.all():
            return ProbeReport(trials, lookahead, False, (t0, int(np.argmin(same))))
    return ProbeReport(trials, lookahead, True)


# --- stdin/stdout framing --------------------------------------------------------------

_COUNT = struct.Struct("<I")


def write_frames(fh: io.BufferedIOBase, frames: np.ndarray) -> None:
    frames = np.ascontiguousarray(frames, dtype="<f4")
    fh.write(_COUNT.pack(frames.shape[0]))
    fh.write(frames.tobytes())


def read_frames(fh: io.BufferedIOBase, width: int) -> np.ndarray | None:
    """Next framed chunk, or ``None`` at a clean end of input."""
    head = fh.read(_COUNT.size)
    if not head:
        return None
    if len(head) < _COUNT.size:
        raise ShapeError("truncated chunk header")
    (count,) = _COUNT.unpack(head)
    need = count * width * 4
    payload = fh.read(need)
    if len(payload) < need:
        raise ShapeError(f"truncated chunk: expected {need} bytes, got {len(payload)}")
    return np.frombuffer(payload, dtype="<f4").reshape(count, width).astype(np.float64)
