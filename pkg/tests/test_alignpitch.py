import os
import subprocess
import sys

import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal

from ssmcond.alignpitch import init_pitch, pitch_fuse, predict_f0
from ssmcond.alignpitch.aligner import (
    AlignerParams, align, attention_centroids, init_aligner, monotonic_loss, perturb_alpha, sinusoid_positions,
)
from ssmcond.encoders import GatedFusionParams
from ssmcond.errors import ShapeError
from ssmcond.numerics import Rng, ops


def sigmoid(x):
    return 1.0 / (1.0 + np.exp(-x))


def monotonic_oracle(alpha):
    t_m, t_x = alpha.shape
    c = [sum(j * alpha[t, j] for j in range(t_x)) for t in range(t_m)]
    return sum(max(0.0, c[t - 1] - c[t]) for t in range(1, t_m)) / t_m


def attention_oracle(mel, h_ts, p):
    """Loop-per-head reference for the cross-attention stack."""
    hd = p.hidden // p.heads
    q_stream = mel @ p.q_in + sinusoid_positions(mel.shape[0], p.hidden)
    memory = h_ts @ p.k_in + sinusoid_positions(h_ts.shape[0], p.hidden)
    for layer in p.layers:
        q, k, v = q_stream @ layer.wq, memory @ layer.wk, memory @ layer.wv
        heads, attn_total = [], 0.0
        for h in range(p.heads):
            sl = slice(h * hd, (h + 1) * hd)
            logits = q[:, sl] @ k[:, sl].T / np.sqrt(hd)
            w = np.exp(logits - logits.max(axis=1, keepdims=True))
            w /= w.sum(axis=1, keepdims=True)
            heads.append(w @ v[:, sl])
            attn_total = attn_total + w
        z = q_stream + np.hstack(heads) @ layer.wo
        mu, var = z.mean(axis=1, keepdims=True), z.var(axis=1, keepdims=True)
        q_stream = (z - mu) / np.sqrt(var + 1e-5)
        alpha = attn_total / p.heads
    return alpha, alpha @ h_ts


# --- aligner ----------------------------------------------------------------------

def test_aligner_shape_contract():
    p = init_aligner(Rng(0), 4)
    assert p.hidden == 256 and p.heads == 4 and len(p.layers) == 2
    with pytest.raises(ValueError):
        AlignerParams(np.zeros((4, 10)), np.zeros((4, 10)), (), heads=4)


def test_align_single_token():
    rng = Rng(1)
    p = init_aligner(rng, 4, hidden=16, heads=4)
    h_ts = rng.normal((1, 4))
    alpha, h_a = align(rng.normal((7, 4)), h_ts, p)
    assert_allclose(alpha, np.ones((7, 1)), atol=1e-15)
    assert_allclose(h_a, np.tile(h_ts, (7, 1)), atol=1e-15)


def test_uniform_alpha_gives_mean_rows():
    from ssmcond.alignpitch.aligner import aligned_encoding

    h_ts = Rng(2).normal((5, 3))
    h_a = aligned_encoding(np.full((4, 5), 0.2), h_ts)
    assert_allclose(h_a, np.tile(h_ts.mean(axis=0), (4, 1)), atol=1e-12)


def test_align_matches_loop_oracle():
    rng = Rng(3)
    p = init_aligner(rng, 4, hidden=16, heads=4)
    mel, h_ts = rng.normal((6, 4)), rng.normal((5, 4))
    alpha, h_a = align(mel, h_ts, p)
    alpha_ref, h_a_ref = attention_oracle(mel, h_ts, p)
    assert_allclose(alpha, alpha_ref, atol=1e-12)
    assert_allclose(h_a, h_a_ref, atol=1e-12)
    assert_allclose(alpha.sum(axis=1), np.ones(6), atol=1e-9)
    assert (alpha >= 0).all()


def test_align_rejects_empty_text():
    p = init_aligner(Rng(4), 4, hidden=8, heads=2)
    with pytest.raises(ShapeError):
        align(np.zeros((3, 4)), np.zeros((0, 4)), p)


# --- monotonic loss ----------------------------------------------------------------

def test_monotonic_advancing_diagonal_zero():
    alpha = np.zeros((6, 4))
    for t, j in enumerate([0, 0, 1, 2, 2, 3]):
        alpha[t, j] = 1.0
    assert float(monotonic_loss(alpha)) == 0.0


def test_monotonic_reversed_diagonal():
    alpha = np.eye(4)[::-1].copy()
    assert_allclose(attention_centroids(alpha)[:, 0], [3, 2, 1, 0])
    assert float(monotonic_loss(alpha)) == pytest.approx(0.75, abs=1e-15)
    assert float(monotonic_loss(alpha)) == pytest.approx(monotonic_oracle(alpha), abs=1e-15)


def test_monotonic_identical_rows_zero():
    row = ops.softmax_rows(Rng(5).normal((1, 5)))
    assert float(monotonic_loss(np.tile(row, (4, 1)))) == 0.0


def test_monotonic_zero_iff_centroids_nondecreasing():
    rng = Rng(6)
    for _ in range(20):
        alpha = ops.softmax_rows(rng.normal((6, 5), 3.0))
        c = attention_centroids(alpha)[:, 0]
        loss = float(monotonic_loss(alpha))
        assert (loss == 0.0) == bool((np.diff(c) >= 0).all())
        assert loss == pytest.approx(monotonic_oracle(alpha), abs=1e-12)
    sorted_rows = np.eye(5)[[0, 1, 1, 3, 4]]
    assert float(monotonic_loss(sorted_rows)) == 0.0


def test_monotonic_invariant_to_repeated_rows():
    alpha = ops.softmax_rows(Rng(7).normal((5, 4)))
    extended = np.vstack([alpha, np.tile(alpha[-1:], (3, 1))])
    # Same drops, more frames: the sum of drops is unchanged.
    assert float(monotonic_loss(extended)) * 8 == pytest.approx(float(monotonic_loss(alpha)) * 5, abs=1e-12)


def test_monotonic_single_frame():
    assert float(monotonic_loss(np.ones((1, 3)) / 3)) == 0.0


# --- perturbation ---------------------------------------------------------------------

def test_perturb_zero_magnitude_unchanged():
    alpha = ops.softmax_rows(Rng(8).normal((4, 3)))
    assert_array_equal(perturb_alpha(alpha, 0.0, Rng(0)), alpha)


@pytest.mark.parametrize("magnitude", [0.05, 0.1, 0.3, 0.5, 0.9])
def test_perturb_row_stochastic(magnitude):
    alpha = ops.softmax_rows(Rng(9).normal((8, 6)))
    out = perturb_alpha(alpha, magnitude, Rng(1))
    assert_allclose(out.sum(axis=1), np.ones(8), atol=1e-9)
    assert (out >= 0).all()


def test_perturb_rejects_large_magnitude():
    with pytest.raises(ValueError):
        perturb_alpha(np.ones((2, 2)) / 2, 1.0, Rng(0))
    with pytest.raises(ValueError):
        perturb_alpha(np.ones((2, 2)) / 2, -0.1, Rng(0))


def test_perturb_golden(fixtures_dir):
    alpha, expected = np.load(os.path.join(fixtures_dir, "perturb_alpha_m010_seed1234.npy"))
    assert_array_equal(ops.softmax_rows(Rng(21).normal((6, 4))), alpha)
    assert_array_equal(perturb_alpha(alpha, 0.10, Rng(1234)), expected)


# --- pitch ------------------------------------------------------------------------------

def test_pitch_zero_inputs():
    p = init_pitch(Rng(10), 4)
    assert_array_equal(pitch_fuse(np.zeros((3, 4)), np.zeros((3, 4)), p), np.zeros((3, 4)))


def test_pitch_zero_gate_weights():
    rng = Rng(11)
    p = init_pitch(rng, 4)
    p = type(p)(GatedFusionParams(np.zeros((8, 8)), p.fusion.w_o), p.w_f, p.b_f)
    h_e, h_b = rng.normal((5, 4)), rng.normal((5, 4))
    assert_allclose(pitch_fuse(h_e, h_b, p), 0.5 * np.hstack([h_e, h_b]) @ p.fusion.w_o, atol=1e-12)


def test_pitch_elementwise_oracle():
    rng = Rng(12)
    p = init_pitch(rng, 3, tau=1.3)
    h_e, h_b = rng.normal((4, 3)), rng.normal((4, 3))
    cat = np.hstack([h_e, h_b])
    expected = (sigmoid(cat @ p.fusion.w_g / 1.3) * cat) @ p.fusion.w_o
    assert_allclose(pitch_fuse(h_e, h_b, p), expected, atol=1e-12)


def test_f0_head():
    rng = Rng(13)
    h_p = rng.normal((6, 4))
    assert_array_equal(predict_f0(h_p, np.zeros((4, 1)), 120.0), np.full((6, 1), 120.0))
    assert_array_equal(predict_f0(np.zeros((6, 4)), rng.normal((4, 1)), np.array([80.0])), np.full((6, 1), 80.0))
    w, b = rng.normal((4, 1)), rng.normal((1,))
    expected = np.array([[sum(h_p[t, i] * w[i, 0] for i in range(4)) + b[0]] for t in range(6)])
    assert_allclose(predict_f0(h_p, w, b), expected, atol=1e-12)
    with pytest.raises(ShapeError):
        predict_f0(h_p, np.zeros((4, 2)), 0.0)


# --- module boundary -------------------------------------------------------------------

def test_inference_path_never_loads_aligner():
    code = (
        "import sys\n"
        "from ssmcond.config import ModelConfig\n"
        "from ssmcond.model import condition, init_conditioning\n"
        "from ssmcond.streaming import open_session\n"
        "from ssmcond.bench.harness import bench_breakdown\n"
        "import numpy as np\n"
        "cfg = ModelConfig(d_ssm=8, text_layers=1, expressive_layers=1, temporal_layers=1)\n"
        "condition(init_conditioning(cfg), [1, 2, 3], np.zeros((80, 6)))\n"
        "bad = [m for m in sys.modules if m.endswith('aligner') or m.endswith('.train') or m.endswith('.losses')]\n"
        "print(bad)\n"
        "sys.exit(1 if bad else 0)\n"
    )
    proc = subprocess.run([sys.executable, "-c", code], capture_output=True, text=True)
    assert proc.returncode == 0, proc.stdout + proc.stderr
