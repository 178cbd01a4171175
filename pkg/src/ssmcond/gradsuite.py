"""Finite-difference checks of every differentiable stage at micro shapes."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .config import ModelConfig
from .numerics import ops
from .numerics.gradcheck import GradCheckResult, grad_check
from .numerics.rng import Rng
from .numerics.tree import flatten, tree_map, unflatten

MICRO = ModelConfig(vocab=8, d=4, d_h=4, d_s=3, d_ssm=4, k=3, n_mels=6, text_layers=1,
                    expressive_layers=1, temporal_layers=1, aligner_layers=2, aligner_heads=2,
                    aligner_hidden=8, seed=1)
MICRO_TOKENS = 3
MICRO_FRAMES = 5
STEP = 1e-4
# The scan path is roughly cubic in its input (through B(u), u and C(u)). At the
# default init its parameter gradients sink to the finite-difference noise floor
# (~1e-11 here), so checks run at a random parameter point where every path
# carries signal.
INPUT_SCALE = 2.0
PARAM_SCALE = 0.7
MODULE_TOL = 1e-4
PIPELINE_TOL = 1e-3


@dataclass
class CheckCase:
    name: str
    tolerance: float
    run: Callable[[], GradCheckResult]


def _projected(fn, template, weights):
    """Scalar ``sum(weights * fn(tree))`` as a function of the flat parameter vector."""
    def f(flat):
        out = fn(unflatten(flat, template))
        return ops.sum_all(ops.mul(out, weights))
    return f


def randomize(tree, rng: Rng, scale: float = PARAM_SCALE):
    """Replace every array leaf with N(0, scale^2) draws of the same shape."""
    return tree_map(lambda leaf: rng.normal(np.shape(leaf), scale), tree)


def _check_tree(fn, template, rng: Rng, out_shape, h: float = STEP) -> GradCheckResult:
    template = randomize(template, rng.child(0))
    weights = rng.normal(out_shape)
    return grad_check(_projected(fn, template, weights), flatten(template), h=h)


@dataclass(frozen=True, eq=False)
class _Pair:
    """Parameters plus a differentiable input, checked jointly."""
    params: object
    x: np.ndarray


def module_cases(cfg: ModelConfig = MICRO, seed: int = 3, scale: float = INPUT_SCALE) -> list[CheckCase]:
    from .alignpitch.aligner import align, init_aligner, monotonic_loss
    from .alignpitch.pitch import init_pitch, pitch_fuse, predict_f0
    from .dynamics.conditioning import (
        assemble_conditioning, init_decoder, init_dynamics, temporal_predict, toy_decode,
    )
    from .encoders import (
        adaln, expressive_encode, gated_fusion, init_adaln, init_expressive_encoder,
        init_gated_fusion, init_temporal_encoder, init_text_encoder, temporal_encode, text_encode,
    )
    from .frontend import init_style, style_embed
    from .ssm import init_mamba_layer, mamba_block, selective_scan

    rng = Rng(seed)
    t_x, t_m, d_h = MICRO_TOKENS, MICRO_FRAMES, cfg.d_h

    def seq(n, c):
        return rng.normal((n, c), scale=scale)

    def vec(n):
        return rng.normal((n,), scale=scale)

    layer = init_mamba_layer(rng.child(1), d_h, cfg.d_ssm, cfg.k)
    cases = [
        CheckCase("selective_scan", MODULE_TOL, lambda p=_Pair(layer, seq(t_m, d_h)): _check_tree(
            lambda q: selective_scan(q.x, q.params)[0], p, rng.child(2), (t_m, d_h))),
        CheckCase("mamba_block/causal", MODULE_TOL, lambda p=_Pair(layer, seq(t_m, d_h)): _check_tree(
            lambda q: mamba_block(q.x, q.params, "causal")[0], p, rng.child(3), (t_m, d_h))),
        CheckCase("mamba_block/same", MODULE_TOL, lambda p=_Pair(layer, seq(t_m, d_h)): _check_tree(
            lambda q: mamba_block(q.x, q.params, "same")[0], p, rng.child(4), (t_m, d_h))),
    ]

    ada = init_adaln(rng.child(5), cfg.d_s, d_h)
    ada = type(ada)(rng.normal(ada.gamma_w.shape, 0.3), ada.gamma_b, ada.beta_w, vec(d_h))
    cases.append(CheckCase("adaln", MODULE_TOL, lambda p=_Pair((ada, vec(cfg.d_s)), seq(t_m, d_h)): _check_tree(
        lambda q: adaln(q.x, q.params[1], q.params[0]), p, rng.child(6), (t_m, d_h))))

    fus = init_gated_fusion(rng.child(7), d_h, 0.7)
    cases.append(CheckCase("gated_fusion", MODULE_TOL, lambda p=_Pair((fus, seq(t_m, d_h)), seq(t_m, d_h)): _check_tree(
        lambda q: gated_fusion(q.x, q.params[1], q.params[0]), p, rng.child(8), (t_m, d_h))))

    style = init_style(rng.child(9), cfg.n_mels, cfg.d_s, cfg.k)
    cases.append(CheckCase("style_embed", MODULE_TOL, lambda p=_Pair(style, seq(cfg.n_mels, t_m)): _check_tree(
        lambda q: style_embed(q.x, q.params), p, rng.child(10), (cfg.d_s,))))

    text = init_text_encoder(rng.child(11), cfg)
    cases.append(CheckCase("text_encode", MODULE_TOL, lambda p=_Pair((text, vec(cfg.d_s)), seq(t_x, cfg.d)): _check_tree(
        lambda q: text_encode(q.x, q.params[1], q.params[0])[0], p, rng.child(12), (t_x, d_h))))

    expr = init_expressive_encoder(rng.child(13), cfg)
    cases.append(CheckCase("expressive_encode", MODULE_TOL, lambda p=_Pair((expr, vec(cfg.d_s)), seq(cfg.n_mels, t_m)): _check_tree(
        lambda q: expressive_encode(q.x, q.params[1], q.params[0]), p, rng.child(14), (t_m, d_h))))

    temp = init_temporal_encoder(rng.child(15), cfg)
    cases.append(CheckCase("temporal_encode", MODULE_TOL, lambda p=_Pair(temp, vec(cfg.d_s)): _check_tree(
        lambda q: temporal_encode(q.x, t_m, q.params), p, rng.child(16), (t_m, d_h))))

    ali = init_aligner(rng.child(17), d_h, cfg.aligner_hidden, cfg.aligner_heads, cfg.aligner_layers)
    cases.append(CheckCase("align", MODULE_TOL, lambda p=_Pair((ali, seq(t_x, d_h)), seq(t_m, d_h)): _check_tree(
        lambda q: align(q.x, q.params[1], q.params[0])[1], p, rng.child(18), (t_m, d_h))))

    # Rows drawn far apart so centroid drops stay clear of the hinge kink.
    logits = rng.normal((t_m, t_x), scale=2.0)
    cases.append(CheckCase("monotonic_loss", MODULE_TOL, lambda p=_Pair((), logits): _check_tree(
        lambda q: monotonic_loss(ops.softmax_rows(q.x)), p, rng.child(19), ())))

    pit = init_pitch(rng.child(20), d_h, cfg.tau)
    cases.append(CheckCase("pitch", MODULE_TOL, lambda p=_Pair((pit, seq(t_m, d_h)), seq(t_m, d_h)): _check_tree(
        lambda q: predict_f0(pitch_fuse(q.x, q.params[1], q.params[0]), q.params[0].w_f, q.params[0].b_f),
        p, rng.child(21), (t_m, 1))))

    dyn = init_dynamics(rng.child(22), d_h, cfg.d_ssm, cfg.k, cfg.tau)
    dec = init_decoder(rng.child(23), d_h, cfg.n_mels)
    cases.append(CheckCase("dynamics", MODULE_TOL, lambda p=_Pair((dyn, seq(t_m, d_h)), seq(t_m, d_h)): _check_tree(
        lambda q: assemble_conditioning(temporal_predict(q.x, q.params[0]), q.params[1], q.params[0]).packed,
        p, rng.child(24), (t_m, 1 + d_h))))
    cases.append(CheckCase("toy_decode", MODULE_TOL, lambda p=_Pair(dec, seq(t_m, 1 + d_h)): _check_tree(
        lambda q: toy_decode(q.x, q.params), p, rng.child(25), (cfg.n_mels, t_m))))
    return cases


def pipeline_case(cfg: ModelConfig = MICRO, seed: int = 3, scale: float = PARAM_SCALE) -> CheckCase:
    """Training loss through style, encoders, aligner, pitch, dynamics and decoder."""
    from .dynamics.data import Sample
    from .dynamics.losses import LossWeights
    from .dynamics.train import init_train_params, sample_loss

    rng = Rng(seed).child(50)
    params = randomize(init_train_params(cfg, seed), rng.child(0), scale)
    sample = Sample(rng.integers(0, cfg.vocab, (MICRO_TOKENS,)),
                    rng.normal((cfg.n_mels, MICRO_FRAMES)), np.zeros((MICRO_FRAMES, 1)))
    weights = LossWeights(lambda_mel=1.0, lambda_align=0.1)

    def run():
        return grad_check(lambda flat: sample_loss(unflatten(flat, params), sample, weights),
                          flatten(params), h=STEP)

    return CheckCase("pipeline", PIPELINE_TOL, run)


def run_all(cfg: ModelConfig = MICRO, seed: int = 3) -> list[tuple[CheckCase, GradCheckResult]]:
    return [(case, case.run()) for case in module_cases(cfg, seed) + [pipeline_case(cfg, seed)]]


def passed(case: CheckCase, result: GradCheckResult) -> bool:
    return result.finite and result.max_rel_error <= case.tolerance


__all__ = ["MICRO", "CheckCase", "module_cases", "pipeline_case", "run_all", "passed"]
