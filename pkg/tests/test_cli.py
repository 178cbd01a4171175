import json
import struct
import subprocess
import sys

import numpy as np
import pytest
from numpy.testing import assert_array_equal

from ssmcond.cli import main
from ssmcond.dynamics.data import make_synthetic_dataset, save_dataset
from ssmcond.frontend import write_wav
from ssmcond.numerics import read_tensor

TINY_MODEL = {"d_ssm": 8, "text_layers": 1, "expressive_layers": 1, "temporal_layers": 1, "aligner_hidden": 16}


@pytest.fixture(scope="module")
def run_dir(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    conf = root / "conf.json"
    conf.write_text(json.dumps({"model": TINY_MODEL, "train": {"steps": 2}}))
    assert main(["train-toy", "--config", str(conf), "--out-dir", str(root / "run"),
                 "--out", str(root / "loss.csv")]) == 0
    return root


def test_train_toy_outputs(run_dir):
    lines = (run_dir / "loss.csv").read_text().splitlines()
    assert lines[0] == "step,loss,lr,grad_norm" and len(lines) == 3
    assert (run_dir / "run" / "checkpoint" / "manifest.json").exists()


def test_mel_and_condition(run_dir):
    write_wav(run_dir / "a.wav", 0.5 * np.sin(2 * np.pi * 220 * np.arange(4800) / 24000))
    assert main(["mel", str(run_dir / "a.wav"), str(run_dir / "a.mvct")]) == 0
    mel = read_tensor(run_dir / "a.mvct")
    assert mel.shape == (80, 4800 // 256 + 1)
    (run_dir / "tok.txt").write_text("3 1 4 1 5\n")
    assert main(["condition", "--ckpt", str(run_dir / "run" / "checkpoint"), "--tokens", str(run_dir / "tok.txt"),
                 "--refmel", str(run_dir / "a.mvct"), "--out", str(run_dir / "h.mvct")]) == 0
    assert read_tensor(run_dir / "h.mvct").shape == (mel.shape[1], 17)


def test_stream_framing(run_dir):
    x = np.random.default_rng(0).normal(size=(30, 16)).astype("<f4")
    payload = struct.pack("<I", 10) + x[:10].tobytes() + struct.pack("<I", 20) + x[10:].tobytes()
    proc = subprocess.run(
        [sys.executable, "-m", "ssmcond.cli", "stream", "--ckpt", str(run_dir / "run" / "checkpoint"),
         "--lookahead-sec", "0.05"],
        input=payload, capture_output=True, check=True,
    )
    out, frames, pos = proc.stdout, [], 0
    while pos < len(out):
        (n,) = struct.unpack_from("<I", out, pos)
        pos += 4
        frames.append(np.frombuffer(out, "<f4", n * 16, pos).reshape(n, 16))
        pos += n * 64
    # ceil(0.05 * 93.75) = 5 frames held back until close.
    assert [f.shape[0] for f in frames] == [5, 20, 5]


def test_gate_stats(run_dir, capsys):
    save_dataset(make_synthetic_dataset(2, vocab=64, duration_s=0.05), run_dir / "corpus")
    assert main(["gate-stats", "--ckpt", str(run_dir / "run" / "checkpoint"), "--corpus", str(run_dir / "corpus")]) == 0
    stats = json.loads(capsys.readouterr().out)
    assert 0 < stats["mean_fwd"] < 1 and 0 < stats["mean_bwd"] < 1


def test_bench_memory_csv(tmp_path, capsys):
    conf = tmp_path / "m.json"
    conf.write_text(json.dumps(TINY_MODEL))
    assert main(["bench", "memory", "--T", "1000", "3000", "--config", str(conf)]) == 0
    lines = capsys.readouterr().out.splitlines()
    assert lines[0] == "T,peak,baseline"
    assert lines[1].split(",")[1] == lines[2].split(",")[1]


def test_env_seed_changes_training(tmp_path, monkeypatch):
    conf = tmp_path / "c.json"
    conf.write_text(json.dumps({"model": TINY_MODEL, "train": {"steps": 1}}))
    losses = []
    for seed in ("1", "2"):
        monkeypatch.setenv("SSMCOND_SEED", seed)
        out = tmp_path / f"l{seed}.csv"
        main(["train-toy", "--config", str(conf), "--out", str(out)])
        losses.append(out.read_text().splitlines()[1])
    assert losses[0] != losses[1]


def test_bad_input_exit_code(tmp_path, capsys):
    assert main(["mel", str(tmp_path / "missing.wav"), str(tmp_path / "o.mvct")]) == 2
    assert "ssmcond:" in capsys.readouterr().err
