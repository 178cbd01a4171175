"""Training-time attention aligner and its monotonicity regularizer.

Nothing on an inference path imports this module.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..errors import ShapeError
from ..numerics import ops
from ..numerics.rng import Rng, dense_init
from ..numerics.tape import value_of


@dataclass(frozen=True, eq=False)
class AttentionLayerParams:
    wq: np.ndarray
    wk: np.ndarray
    wv: np.ndarray
    wo: np.ndarray


@dataclass(frozen=True, eq=False)
class AlignerParams:
    q_in: np.ndarray   # d_h x hidden, mel side
    k_in: np.ndarray   # d_h x hidden, text side
    layers: tuple[AttentionLayerParams, ...]
    heads: int = 4

    def __post_init__(self):
        hidden = value_of(self.q_in).shape[1]
        if hidden % self.heads:
            raise ValueError(f"hidden {hidden} is not a multiple of heads {self.heads}")

    @property
    def hidden(self) -> int:
        return value_of(self.q_in).shape[1]


def init_aligner(rng: Rng, d_h: int, hidden: int = 256, heads: int = 4, layers: int = 2) -> AlignerParams:
    return AlignerParams(
        q_in=dense_init(rng, d_h, hidden),
        k_in=dense_init(rng, d_h, hidden),
        layers=tuple(
            AttentionLayerParams(*(dense_init(rng, hidden, hidden) for _ in range(4)))
            for _ in range(layers)
        ),
        heads=heads,
    )


def sinusoid_positions(n: int, dim: int) -> np.ndarray:
    pos = np.arange(n)[:, None]
    i = np.arange(dim)[None, :]
    angle = pos / np.power(10000.0, (2 * (i // 2)) / dim)
    return np.where(i % 2 == 0, np.sin(angle), np.cos(angle))


def aligned_encoding(alpha, h_ts):
    return ops.matmul(alpha, h_ts)


def align(mel_features, h_ts, p: AlignerParams):
    """Cross-attend mel-rate features to text; returns ``(alpha, h_A)``.

    ``alpha`` (T_m x T_x) is the head-averaged attention of the last layer and
    ``h_A = alpha @ h_ts``.
    """
    n_frames = value_of(mel_features).shape[0]
    n_tokens = value_of(h_ts).shape[0]
    if n_tokens < 1:
        raise ShapeError("aligner needs at least one text token")
    hidden, heads = p.hidden, p.heads
    hd = hidden // heads
    q_stream = ops.add(ops.linear(mel_features, p.q_in), sinusoid_positions(n_frames, hidden))
    memory = ops.add(ops.linear(h_ts, p.k_in), sinusoid_positions(n_tokens, hidden))
    alpha = None
    for layer in p.layers:
        q = ops.linear(q_stream, layer.wq)
        k = ops.linear(memory, layer.wk)
        v = ops.linear(memory, layer.wv)
        head_out = []
        attn_sum = None
        for h in range(heads):
            qh = ops.slice_cols(q, h * hd, (h + 1) * hd)
            kh = ops.slice_cols(k, h * hd, (h + 1) * hd)
            vh = ops.slice_cols(v, h * hd, (h + 1) * hd)
            attn = ops.softmax_rows(ops.scale(ops.matmul(qh, ops.transpose(kh)), 1.0 / math.sqrt(hd)))
            head_out.append(ops.matmul(attn, vh))
            attn_sum = attn if attn_sum is None else ops.add(attn_sum, attn)
        merged = head_out[0]
        for part in head_out[1:]:
            merged = ops.concat_cols(merged, part)
        q_stream = ops.layer_norm(ops.add(q_stream, ops.linear(merged, layer.wo)))
        alpha = ops.scale(attn_sum, 1.0 / heads)
    return alpha, aligned_encoding(alpha, h_ts)


def attention_centroids(alpha):
    n_tokens = value_of(alpha).shape[1]
    return ops.matmul(alpha, np.arange(n_tokens, dtype=np.float64).reshape(-1, 1))


def monotonic_loss(alpha):
    """Mean hinge on backward moves of the attention centroid.

    ``(1 / T_m) * sum_t relu(c[t-1] - c[t])`` with ``c[t] = sum_j j * alpha[t, j]``.
    """
    n_frames = value_of(alpha).shape[0]
    if n_frames < 2:
        return ops.scale(ops.sum_all(ops.slice_rows(alpha, 0, 0)), 0.0)
    c = attention_centroids(alpha)
    drops = ops.relu(ops.sub(ops.slice_rows(c, 0, n_frames - 1), ops.slice_rows(c, 1, n_frames)))
    return ops.scale(ops.sum_all(drops), 1.0 / n_frames)


def perturb_alpha(alpha, magnitude: float, rng: Rng):
    """Scale each weight by ``1 + u``, ``u ~ U[-magnitude, magnitude]``, then renormalize rows."""
    if not 0.0 <= magnitude < 1.0:
        raise ValueError(f"perturbation magnitude must lie in [0, 1), got {magnitude}")
    if magnitude == 0.0:
        return alpha
    noise = 1.0 + rng.uniform(-magnitude, magnitude, value_of(alpha).shape)
    return ops.row_normalize(ops.mul(alpha, noise))
