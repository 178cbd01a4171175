"""Pitch fusion and the linear F0 head."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..encoders import GatedFusionParams, gated_fusion, init_gated_fusion
from ..errors import ShapeError
from ..numerics import ops
from ..numerics.rng import Rng, dense_init
from ..numerics.tape import value_of


@dataclass(frozen=True, eq=False)
class PitchParams:
    fusion: GatedFusionParams
    w_f: np.ndarray   # d_h x 1
    b_f: np.ndarray   # (1,)


def init_pitch(rng: Rng, d_h: int, tau: float = 1.0) -> PitchParams:
    return PitchParams(init_gated_fusion(rng, d_h, tau), dense_init(rng, d_h, 1), np.zeros(1))


def pitch_fuse(h_e, h_b, p: PitchParams):
    """Gated fusion of expressive and temporal features into h_P."""
    return gated_fusion(h_e, h_b, p.fusion)


def predict_f0(h_p, w_f, b_f):
    """Per-frame F0 = h_P W_F + b_F, shape T_m x 1."""
    wv = value_of(w_f)
    if wv.ndim != 2 or wv.shape[1] != 1:
        raise ShapeError(f"F0 head must be d_h x 1, got {wv.shape}")
    if np.ndim(value_of(b_f)) == 0:
        b_f = np.full(1, float(b_f))
    return ops.linear(h_p, w_f, b_f)
