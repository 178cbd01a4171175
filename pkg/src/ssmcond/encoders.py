"""Conditioning encoders: gated Bi-Mamba text, Expressive Mamba, Temporal Bi-Mamba."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .config import EPS, ModelConfig
from .errors import ShapeError
from .numerics import ops
from .numerics.rng import Rng, conv_init, dense_init
from .numerics.tape import value_of
from .ssm import MambaLayerParams, bidirectional_scan, init_mamba_layer, run_stack


# --- AdaLN ----------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class AdaLNParams:
    gamma_w: np.ndarray   # d_s x d_h
    gamma_b: np.ndarray   # d_h
    beta_w: np.ndarray    # d_s x d_h
    beta_b: np.ndarray    # d_h
    eps: float = EPS


def init_adaln(rng: Rng, d_s: int, d_h: int) -> AdaLNParams:
    # gamma(e=0) = 1 and beta(e=0) = 0, so a zero style vector leaves LN untouched.
    return AdaLNParams(
        gamma_w=np.zeros((d_s, d_h)),
        gamma_b=np.ones(d_h),
        beta_w=dense_init(rng, d_s, d_h),
        beta_b=np.zeros(d_h),
    )


def _style_row(e):
    ev = value_of(e)
    if ev.ndim == 1:
        return ops.reshape(e, (1, ev.shape[0]))
    if ev.ndim == 2 and ev.shape[0] == 1:
        return e
    raise ShapeError(f"style embedding must be a vector, got shape {ev.shape}")


def adaln(z, e, p: AdaLNParams):
    """``gamma(e) * LN(z) + beta(e)``, modulation broadcast over time."""
    row = _style_row(e)
    if value_of(row).shape[1] != value_of(p.gamma_w).shape[0]:
        raise ShapeError(
            f"style dim {value_of(row).shape[1]} does not match AdaLN input {value_of(p.gamma_w).shape[0]}"
        )
    gamma = ops.linear(row, p.gamma_w, p.gamma_b)
    beta = ops.linear(row, p.beta_w, p.beta_b)
    return ops.add(ops.mul(ops.layer_norm(z, p.eps), gamma), beta)


# --- gated fusion -----------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class GatedFusionParams:
    w_g: np.ndarray   # 2d_h x 2d_h
    w_o: np.ndarray   # 2d_h x d_h
    tau: float = 1.0

    def __post_init__(self):
        if not self.tau > 0:
            raise ValueError(f"gating temperature must be > 0, got {self.tau}")


def init_gated_fusion(rng: Rng, d_h: int, tau: float = 1.0) -> GatedFusionParams:
    return GatedFusionParams(dense_init(rng, 2 * d_h, 2 * d_h), dense_init(rng, 2 * d_h, d_h), tau)


def gated_fusion(h_f, h_b, p: GatedFusionParams, return_gates: bool = False):
    """``(sigmoid(W_g [h_f; h_b] / tau) * [h_f; h_b]) W_o``."""
    if value_of(h_f).shape != value_of(h_b).shape:
        raise ShapeError(f"fusion inputs differ: {value_of(h_f).shape} vs {value_of(h_b).shape}")
    cat = ops.concat_cols(h_f, h_b)
    logits = ops.linear(cat, p.w_g)
    if p.tau != 1.0:
        logits = ops.scale(logits, 1.0 / p.tau)
    gates = ops.sigmoid(logits)
    out = ops.linear(ops.mul(gates, cat), p.w_o)
    return (out, gates) if return_gates else out


# --- shallow gated transform ---------------------------------------------------------

@dataclass(frozen=True, eq=False)
class GatedTransformParams:
    in_w: np.ndarray   # d_in x d_h
    in_b: np.ndarray   # d_h
    u: np.ndarray      # d_h x d_h


def init_gated_transform(rng: Rng, d_in: int, d_h: int) -> GatedTransformParams:
    return GatedTransformParams(dense_init(rng, d_in, d_h), np.zeros(d_h), dense_init(rng, d_h, d_h))


def gated_transform(x, p: GatedTransformParams):
    z = ops.linear(x, p.in_w, p.in_b)
    return ops.mul(z, ops.sigmoid(ops.linear(z, p.u)))


# --- text encoder -----------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class TextEncoderParams:
    proj_w: np.ndarray                       # d x d_h
    proj_b: np.ndarray
    fwd: tuple[MambaLayerParams, ...]
    bwd: tuple[MambaLayerParams, ...]
    fusion: GatedFusionParams
    adaln: AdaLNParams


def init_text_encoder(rng: Rng, cfg: ModelConfig) -> TextEncoderParams:
    def layer():
        return init_mamba_layer(rng, cfg.d_h, cfg.d_ssm, cfg.k, cfg.state_bound)

    return TextEncoderParams(
        proj_w=dense_init(rng, cfg.d, cfg.d_h),
        proj_b=np.zeros(cfg.d_h),
        fwd=tuple(layer() for _ in range(cfg.text_layers)),
        bwd=tuple(layer() for _ in range(cfg.text_layers)),
        fusion=init_gated_fusion(rng, cfg.d_h, cfg.tau),
        adaln=init_adaln(rng, cfg.d_s, cfg.d_h),
    )


def text_encode(x, e, p: TextEncoderParams):
    """Returns ``(h_T_s, gate_trace)``; the gate trace is T_x x 2d_h, forward half first."""
    h = ops.linear(x, p.proj_w, p.proj_b)
    h_f, h_b = bidirectional_scan(h, p.fwd, p.bwd)
    h_t, gates = gated_fusion(h_f, h_b, p.fusion, return_gates=True)
    return adaln(h_t, e, p.adaln), gates


# --- expressive encoder -------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class ExpressiveEncoderParams:
    transform: GatedTransformParams          # F -> d_h
    adaln: AdaLNParams
    blocks: tuple[MambaLayerParams, ...]


def init_expressive_encoder(rng: Rng, cfg: ModelConfig) -> ExpressiveEncoderParams:
    return ExpressiveEncoderParams(
        transform=init_gated_transform(rng, cfg.n_mels, cfg.d_h),
        adaln=init_adaln(rng, cfg.d_s, cfg.d_h),
        blocks=tuple(
            init_mamba_layer(rng, cfg.d_h, cfg.d_ssm, cfg.k, cfg.state_bound)
            for _ in range(cfg.expressive_layers)
        ),
    )


def expressive_style_input(mel, e, p: ExpressiveEncoderParams):
    """Style-conditioned mel features, before the Mamba stack."""
    return adaln(gated_transform(ops.transpose(mel), p.transform), e, p.adaln)


def expressive_encode(mel, e, p: ExpressiveEncoderParams):
    """Mel (F x T_m) -> h_E (T_m x d_h). Offline: blocks use same-padding."""
    h, _ = run_stack(expressive_style_input(mel, e, p), p.blocks, padding="same")
    return h


# --- temporal encoder ---------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class TemporalEncoderParams:
    transform: GatedTransformParams          # d_s -> d_h
    conv: np.ndarray                          # d_h x k
    fwd: tuple[MambaLayerParams, ...]
    bwd: tuple[MambaLayerParams, ...]
    w_f: np.ndarray                           # 2d_h x d_h
    gate: GatedFusionParams | None = None     # set only for the gated-fusion ablation


def init_temporal_encoder(rng: Rng, cfg: ModelConfig) -> TemporalEncoderParams:
    def layer():
        return init_mamba_layer(rng, cfg.d_h, cfg.d_ssm, cfg.k, cfg.state_bound)

    return TemporalEncoderParams(
        transform=init_gated_transform(rng, cfg.d_s, cfg.d_h),
        conv=conv_init(rng, cfg.d_h, cfg.k),
        fwd=tuple(layer() for _ in range(cfg.temporal_layers)),
        bwd=tuple(layer() for _ in range(cfg.temporal_layers)),
        w_f=dense_init(rng, 2 * cfg.d_h, cfg.d_h),
        gate=init_gated_fusion(rng, cfg.d_h, cfg.tau) if cfg.temporal_gated else None,
    )


def temporal_encode(e, n_frames: int, p: TemporalEncoderParams):
    """Broadcast style over ``n_frames`` and scan both ways; linear fusion."""
    if n_frames < 1:
        raise ShapeError(f"temporal_encode needs T_m >= 1, got {n_frames}")
    h_s = gated_transform(ops.repeat_rows(e, n_frames), p.transform)
    inp = ops.add(h_s, ops.depthwise_conv1d(h_s, p.conv, "same"))
    h_f, h_b = bidirectional_scan(inp, p.fwd, p.bwd)
    if p.gate is not None:
        return gated_fusion(h_f, h_b, p.gate)
    return ops.linear(ops.concat_cols(h_f, h_b), p.w_f)
