import math

import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal

from ssmcond.config import ModelConfig
from ssmcond.encoders import (
    AdaLNParams, GatedFusionParams, GatedTransformParams, adaln, expressive_encode, expressive_style_input,
    gated_fusion, init_adaln, init_expressive_encoder, init_gated_fusion, init_temporal_encoder, init_text_encoder,
    temporal_encode, text_encode,
)
from ssmcond.numerics import Rng, depthwise_conv1d, layer_norm
from ssmcond.ssm import bidirectional_scan, mamba_block, run_stack

CFG = ModelConfig(vocab=10, d=5, d_h=4, d_s=3, d_ssm=6, k=5, n_mels=7, text_layers=2,
                  expressive_layers=2, temporal_layers=2)


def sigmoid(x):
    return 1.0 / (1.0 + np.exp(-x))


def ln_oracle(z, eps=1e-5):
    mu = z.mean(axis=1, keepdims=True)
    var = ((z - mu) ** 2).mean(axis=1, keepdims=True)
    return (z - mu) / np.sqrt(var + eps)


# --- AdaLN -----------------------------------------------------------------------

def test_adaln_default_init_zero_style_is_layer_norm():
    z = Rng(0).normal((6, 4))
    assert_array_equal(adaln(z, np.zeros(3), init_adaln(Rng(1), 3, 4)), layer_norm(z))


def test_adaln_zero_gamma_gives_beta_rows():
    rng = Rng(2)
    p = AdaLNParams(np.zeros((3, 4)), np.zeros(4), rng.normal((3, 4)), rng.normal((4,)))
    e = rng.normal((3,))
    out = adaln(rng.normal((5, 4)), e, p)
    assert_allclose(out, np.tile(e @ p.beta_w + p.beta_b, (5, 1)), atol=1e-12)


def test_adaln_broadcast_oracle():
    rng = Rng(3)
    p = AdaLNParams(rng.normal((3, 4)), rng.normal((4,)), rng.normal((3, 4)), rng.normal((4,)))
    z, e = rng.normal((6, 4)), rng.normal((3,))
    gamma, beta = e @ p.gamma_w + p.gamma_b, e @ p.beta_w + p.beta_b
    expected = np.stack([gamma * row + beta for row in ln_oracle(z)])
    assert_allclose(adaln(z, e, p), expected, atol=1e-12)


# --- gated fusion ---------------------------------------------------------------

def test_fusion_zero_gate_weights_halves():
    rng = Rng(4)
    p = GatedFusionParams(np.zeros((8, 8)), rng.normal((8, 4)))
    h_f, h_b = rng.normal((5, 4)), rng.normal((5, 4))
    assert_allclose(gated_fusion(h_f, h_b, p), 0.5 * np.hstack([h_f, h_b]) @ p.w_o, atol=1e-12)


def test_fusion_zero_inputs():
    p = init_gated_fusion(Rng(5), 4)
    assert_array_equal(gated_fusion(np.zeros((3, 4)), np.zeros((3, 4)), p), np.zeros((3, 4)))


@pytest.mark.parametrize("tau", [0.7, 1.0, 1.3])
def test_fusion_elementwise_oracle(tau):
    rng = Rng(6)
    p = GatedFusionParams(rng.normal((8, 8)), rng.normal((8, 4)), tau)
    h_f, h_b = rng.normal((5, 4)), rng.normal((5, 4))
    out, gates = gated_fusion(h_f, h_b, p, return_gates=True)
    expected = np.zeros((5, 4))
    for t in range(5):
        cat = np.concatenate([h_f[t], h_b[t]])
        g = np.array([sigmoid(sum(cat[i] * p.w_g[i, j] for i in range(8)) / tau) for j in range(8)])
        expected[t] = (g * cat) @ p.w_o
    assert_allclose(out, expected, atol=1e-12)
    assert ((gates > 0) & (gates < 1)).all()


def test_fusion_rejects_bad_temperature():
    with pytest.raises(ValueError):
        GatedFusionParams(np.zeros((2, 2)), np.zeros((2, 1)), 0.0)


def test_fusion_gate_moves_toward_ungated_value():
    rng = Rng(7)
    h_f, h_b = rng.normal((1, 2)), rng.normal((1, 2))
    cat = np.hstack([h_f, h_b])[0]
    base = rng.normal((4, 4))
    gated = []
    for shift in np.linspace(-3, 3, 7):
        w_g = base.copy()
        w_g[:, 1] += shift * np.sign(cat)  # pushes the logit of coordinate 1 upward
        gated.append(sigmoid(cat @ w_g)[1] * cat[1])
    dist = np.abs(np.array(gated) - cat[1])
    assert (np.diff(dist) <= 0).all()


# --- text encoder ---------------------------------------------------------------

def test_text_encode_composition_oracle():
    rng = Rng(8)
    p = init_text_encoder(rng, CFG)
    x, e = rng.normal((6, CFG.d)), rng.normal((CFG.d_s,))
    out, gates = text_encode(x, e, p)
    h = x @ p.proj_w + p.proj_b
    h_f, _ = run_stack(h, p.fwd)
    h_b_rev, _ = run_stack(h[::-1].copy(), p.bwd)
    h_b = h_b_rev[::-1]
    cat = np.hstack([h_f, h_b])
    g = sigmoid(cat @ p.fusion.w_g / p.fusion.tau)
    fused = (g * cat) @ p.fusion.w_o
    assert_allclose(gates, g, atol=1e-12)
    assert_allclose(out, adaln(fused, e, p.adaln), atol=1e-12)
    assert out.shape == (6, CFG.d_h) and gates.shape == (6, 2 * CFG.d_h)


def test_text_encode_single_token_tied_directions():
    rng = Rng(9)
    p = init_text_encoder(rng, CFG)
    x = rng.normal((1, CFG.d))
    h = x @ p.proj_w + p.proj_b
    h_f, h_b = bidirectional_scan(h, p.fwd, p.fwd)
    assert_array_equal(h_f, h_b)
    out, _ = text_encode(x, np.zeros(CFG.d_s), p)
    assert out.shape == (1, CFG.d_h)


def test_text_encode_zero_path_gives_beta():
    rng = Rng(10)
    p = init_text_encoder(rng, CFG)
    e = rng.normal((CFG.d_s,))
    out, _ = text_encode(np.zeros((4, CFG.d)), e, p)
    assert_allclose(out, np.tile(e @ p.adaln.beta_w + p.adaln.beta_b, (4, 1)), atol=1e-12)


# --- expressive encoder ------------------------------------------------------------

def test_expressive_composition_oracle():
    rng = Rng(11)
    p = init_expressive_encoder(rng, CFG)
    mel, e = rng.normal((CFG.n_mels, 9)), rng.normal((CFG.d_s,))
    t = p.transform
    z = mel.T @ t.in_w + t.in_b
    h = adaln(z * sigmoid(z @ t.u), e, p.adaln)
    for block in p.blocks:
        h, _ = mamba_block(h, block, "same")
    assert_allclose(expressive_encode(mel, e, p), h, atol=1e-12)


def test_expressive_zero_u_halves_transform():
    rng = Rng(12)
    p = init_expressive_encoder(rng, CFG)
    t = GatedTransformParams(p.transform.in_w, p.transform.in_b, np.zeros_like(p.transform.u))
    p = type(p)(t, init_adaln(rng, CFG.d_s, CFG.d_h), p.blocks)
    mel = rng.normal((CFG.n_mels, 5))
    z = mel.T @ t.in_w + t.in_b
    assert_allclose(expressive_style_input(mel, np.zeros(CFG.d_s), p), layer_norm(0.5 * z), atol=1e-12)


def test_expressive_silence_first_row_receptive_field():
    rng = Rng(13)
    p = init_expressive_encoder(rng, CFG)
    mel = np.full((CFG.n_mels, 20), math.log(1e-5))
    e = rng.normal((CFG.d_s,))
    pre = expressive_style_input(mel, e, p)
    assert_array_equal(pre, np.tile(pre[:1], (20, 1)))
    # Row 0 sees (k - 1) / 2 future frames per same-padded block and nothing else.
    reach = 1 + CFG.expressive_layers * (CFG.k - 1) // 2
    full = expressive_encode(mel, e, p)
    assert_allclose(expressive_encode(mel[:, :reach], e, p)[0], full[0], atol=1e-12)
    assert not np.allclose(expressive_encode(mel[:, :1], e, p)[0], full[0])


# --- temporal encoder ---------------------------------------------------------------

def test_temporal_zero_fusion():
    rng = Rng(14)
    p = init_temporal_encoder(rng, CFG)
    p = type(p)(p.transform, p.conv, p.fwd, p.bwd, np.zeros_like(p.w_f))
    assert_array_equal(temporal_encode(rng.normal((CFG.d_s,)), 6, p), np.zeros((6, CFG.d_h)))


def test_temporal_single_frame_tied_directions():
    rng = Rng(15)
    p = init_temporal_encoder(rng, CFG)
    p = type(p)(p.transform, p.conv, p.fwd, p.fwd, p.w_f)
    e = rng.normal((CFG.d_s,))
    out = temporal_encode(e, 1, p)
    t = p.transform
    z = e[None, :] @ t.in_w + t.in_b
    h_s = z * sigmoid(z @ t.u)
    inp = h_s + depthwise_conv1d(h_s, p.conv, "same")
    h, _ = run_stack(inp, p.fwd)
    assert_allclose(out, np.hstack([h, h]) @ p.w_f, atol=1e-12)


def test_temporal_composition_oracle():
    rng = Rng(16)
    p = init_temporal_encoder(rng, CFG)
    e = rng.normal((CFG.d_s,))
    t = p.transform
    z = np.tile(e, (12, 1)) @ t.in_w + t.in_b
    h_s = z * sigmoid(z @ t.u)
    inp = h_s + depthwise_conv1d(h_s, p.conv, "same")
    h_f, _ = run_stack(inp, p.fwd)
    h_b, _ = run_stack(inp[::-1].copy(), p.bwd)
    expected = np.hstack([h_f, h_b[::-1]]) @ p.w_f
    assert_allclose(temporal_encode(e, 12, p), expected, atol=1e-12)


def test_temporal_gated_ablation_switch():
    cfg = CFG.replace(temporal_gated=True)
    p = init_temporal_encoder(Rng(17), cfg)
    assert p.gate is not None
    assert temporal_encode(np.ones(cfg.d_s), 4, p).shape == (4, cfg.d_h)


def test_encoders_have_no_time_by_time_buffers():
    from ssmcond.numerics import ActivationAuditor

    rng = Rng(18)
    p = init_text_encoder(rng, CFG)
    largest = []
    for n in (64, 256):
        with ActivationAuditor() as aud:
            text_encode(rng.normal((n, CFG.d)), np.zeros(CFG.d_s), p)
        largest.append(aud.peak)
    # Linear in T: a T x T buffer would grow the peak sixteen-fold.
    assert largest[1] / largest[0] < 4.5
