import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal

from ssmcond.config import ModelConfig, env_seed
from ssmcond.model import (
    condition, decode_preview, init_conditioning, load_conditioning, load_tree, read_manifest, save_checkpoint,
)
from ssmcond.numerics.tree import leaves, num_params

CFG = ModelConfig(d_ssm=8, text_layers=1, expressive_layers=1, temporal_layers=1)


def test_condition_shapes():
    p = init_conditioning(CFG)
    cond, feats = condition(p, [1, 2, 3], np.random.default_rng(0).normal(size=(80, 11)))
    assert cond.packed.shape == (11, 1 + CFG.d_h)
    assert feats.h_ts.shape == (3, CFG.d_h)
    assert feats.gates.shape == (3, 2 * CFG.d_h)
    assert decode_preview(cond, p).shape == (80, 11)


def test_init_is_seeded():
    a, b = init_conditioning(CFG, 4), init_conditioning(CFG, 4)
    for x, y in zip(leaves(a), leaves(b)):
        assert_array_equal(x, y)
    assert not np.array_equal(init_conditioning(CFG, 5).embedding, a.embedding)


def test_checkpoint_round_trip(tmp_path):
    p = init_conditioning(CFG, 2)
    save_checkpoint(tmp_path, {"cond": p}, CFG, meta={"note": "x"})
    manifest = read_manifest(tmp_path)
    assert manifest["meta"] == {"note": "x"}
    assert len(manifest["tensors"]) == len(leaves(p))
    back, cfg = load_conditioning(tmp_path)
    assert cfg == CFG
    assert num_params(back) == num_params(p)
    for x, y in zip(leaves(p), leaves(back)):
        assert_allclose(x, y, rtol=1e-7, atol=1e-7)
        assert np.shape(x) == np.shape(y)


def test_checkpoint_missing_and_mismatched(tmp_path):
    p = init_conditioning(CFG)
    save_checkpoint(tmp_path, {"cond": p}, CFG)
    with pytest.raises(KeyError):
        load_tree(tmp_path, "ema.cond", p)
    with pytest.raises(ValueError):
        load_tree(tmp_path, "cond", init_conditioning(CFG.replace(d_h=8)))


def test_config_round_trip_and_validation():
    assert ModelConfig.from_dict(CFG.to_dict()) == CFG
    with pytest.raises(ValueError):
        ModelConfig.from_dict({"bogus": 1})
    with pytest.raises(ValueError):
        ModelConfig(tau=0.0)
    with pytest.raises(ValueError):
        ModelConfig(aligner_hidden=10, aligner_heads=4)


def test_env_seed(monkeypatch):
    monkeypatch.delenv("SSMCOND_SEED", raising=False)
    assert env_seed(3) == 3
    monkeypatch.setenv("SSMCOND_SEED", "11")
    assert env_seed(3) == 11


@pytest.mark.parametrize("d_h,d_ssm,k,t_x,t_m", [(4, 4, 3, 1, 1), (8, 16, 5, 5, 9), (16, 8, 7, 12, 3)])
def test_h_d_width(d_h, d_ssm, k, t_x, t_m):
    cfg = ModelConfig(d=6, d_h=d_h, d_s=3, d_ssm=d_ssm, k=k, n_mels=10, text_layers=1, expressive_layers=1,
                      temporal_layers=1)
    cond, _ = condition(init_conditioning(cfg), list(range(t_x)), np.zeros((10, t_m)))
    assert cond.packed.shape == (t_m, 1 + d_h)
