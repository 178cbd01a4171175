"""Speech-dynamics stage: temporal predictor, h_D assembly, toy decoder."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..encoders import GatedFusionParams, gated_fusion, init_gated_fusion
from ..errors import ShapeError
from ..numerics import ops
from ..numerics.rng import Rng, conv_init, dense_init
from ..numerics.tape import value_of
from ..ssm import MambaLayerParams, init_mamba_layer, mamba_block


@dataclass(frozen=True, eq=False)
class DynamicsParams:
    conv: np.ndarray              # d_h x k, same-padded
    block: MambaLayerParams
    fusion: GatedFusionParams
    w_f0: np.ndarray              # d_h x 1
    b_f0: np.ndarray              # (1,)
    w_n: np.ndarray               # d_h x d_h


def init_dynamics(rng: Rng, d_h: int, d_ssm: int = 96, k: int = 5, tau: float = 1.0,
                  state_bound: float = 1e3) -> DynamicsParams:
    return DynamicsParams(
        conv=conv_init(rng, d_h, k),
        block=init_mamba_layer(rng, d_h, d_ssm, k, state_bound),
        fusion=init_gated_fusion(rng, d_h, tau),
        w_f0=dense_init(rng, d_h, 1),
        b_f0=np.zeros(1),
        w_n=dense_init(rng, d_h, d_h),
    )


def temporal_predict(h_a, p: DynamicsParams):
    """Same-padded depthwise conv followed by one Mamba block: h_A -> h_Tm."""
    h, _ = mamba_block(ops.depthwise_conv1d(h_a, p.conv, "same"), p.block, padding="same")
    return h


@dataclass(frozen=True, eq=False)
class ConditioningSequence:
    f0_hat: object   # T_m x 1
    n: object        # T_m x d_h

    @property
    def packed(self):
        return pack_conditioning(self.f0_hat, self.n)

    @property
    def num_frames(self) -> int:
        return value_of(self.f0_hat).shape[0]


def pack_conditioning(f0_hat, n):
    """Column 0 is F0_hat, columns 1..d_h are n."""
    f0v, nv = value_of(f0_hat), value_of(n)
    if f0v.ndim != 2 or f0v.shape[1] != 1:
        raise ShapeError(f"F0_hat must be T_m x 1, got {f0v.shape}")
    if nv.ndim != 2 or nv.shape[0] != f0v.shape[0]:
        raise ShapeError(f"n must be T_m x d_h with T_m={f0v.shape[0]}, got {nv.shape}")
    return ops.concat_cols(f0_hat, n)


def unpack_conditioning(h_d) -> ConditioningSequence:
    width = value_of(h_d).shape[1]
    if width < 2:
        raise ShapeError(f"packed h_D needs at least 2 columns, got {width}")
    return ConditioningSequence(ops.slice_cols(h_d, 0, 1), ops.slice_cols(h_d, 1, width))


def assemble_conditioning(h_tm, h_p, p: DynamicsParams) -> ConditioningSequence:
    g = gated_fusion(h_tm, h_p, p.fusion)
    return ConditioningSequence(ops.linear(g, p.w_f0, p.b_f0), ops.linear(g, p.w_n))


# --- toy decoder ---------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class DecoderParams:
    w: np.ndarray   # (1 + d_h) x F
    b: np.ndarray   # F


def init_decoder(rng: Rng, d_h: int, n_mels: int) -> DecoderParams:
    return DecoderParams(dense_init(rng, 1 + d_h, n_mels), np.zeros(n_mels))


def toy_decode(h_d, p: DecoderParams):
    """Per-frame linear map of packed h_D to a mel frame; returns F x T_m."""
    if isinstance(h_d, ConditioningSequence):
        h_d = h_d.packed
    return ops.transpose(ops.linear(h_d, p.w, p.b))


def expand_uniform(h_ts, n_frames: int):
    """Attention-free stand-in for the aligner: frame t reads token floor(t * T_x / T_m)."""
    n_tokens = value_of(h_ts).shape[0]
    if n_tokens < 1 or n_frames < 1:
        raise ShapeError(f"expand_uniform needs T_x >= 1 and T_m >= 1, got {n_tokens}, {n_frames}")
    idx = (np.arange(n_frames) * n_tokens) // n_frames
    return ops.take_rows(h_ts, idx)
