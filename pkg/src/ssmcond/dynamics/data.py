"""Seeded synthetic corpus: gliding sine tones with known F0 and random tokens."""

from __future__ import annotations

import json
import os
from dataclasses import dataclass

import numpy as np

from ..config import HOP, SAMPLE_RATE
from ..frontend import Waveform, compute_mel
from ..numerics.rng import Rng
from ..numerics.tensorio import read_tensor, write_tensor


@dataclass(frozen=True, eq=False)
class Sample:
    ids: np.ndarray        # int64 token ids
    mel: np.ndarray        # F x T_m
    f0: np.ndarray         # T_m x 1, Hz
    wav: Waveform | None = None


def glide_tone(f_start: float, f_end: float, n_samples: int, amplitude: float = 0.5):
    """Linear F0 glide; returns ``(samples, instantaneous_f0)``."""
    f = np.linspace(f_start, f_end, n_samples)
    phase = 2.0 * np.pi * np.cumsum(f) / SAMPLE_RATE
    return amplitude * np.sin(phase), f


def make_synthetic_dataset(n: int = 4, seed: int = 7, vocab: int = 64, duration_s: float = 0.25,
                           min_tokens: int = 3, max_tokens: int = 8) -> list[Sample]:
    rng = Rng(seed)
    n_samples = int(round(duration_s * SAMPLE_RATE))
    out = []
    for _ in range(n):
        f_start, f_end = rng.uniform(110.0, 330.0, (2,))
        samples, f_inst = glide_tone(float(f_start), float(f_end), n_samples)
        wav = Waveform(samples)
        mel = compute_mel(wav)
        centers = np.minimum(np.arange(mel.shape[1]) * HOP, n_samples - 1)
        n_tok = int(rng.integers(min_tokens, max_tokens + 1))
        ids = rng.integers(1, vocab, (n_tok,)).astype(np.int64)
        out.append(Sample(ids, mel, f_inst[centers].reshape(-1, 1), wav))
    return out


def save_dataset(samples: list[Sample], path: str | os.PathLike) -> None:
    """Directory of MVCT mels/contours plus a JSON index holding the token ids."""
    os.makedirs(path, exist_ok=True)
    index = []
    for i, s in enumerate(samples):
        write_tensor(s.mel, os.path.join(path, f"mel_{i}.mvct"))
        write_tensor(s.f0, os.path.join(path, f"f0_{i}.mvct"))
        index.append({"ids": [int(t) for t in s.ids], "mel": f"mel_{i}.mvct", "f0": f"f0_{i}.mvct"})
    with open(os.path.join(path, "index.json"), "w") as fh:
        json.dump(index, fh, indent=1)


def load_dataset(path: str | os.PathLike) -> list[Sample]:
    with open(os.path.join(path, "index.json")) as fh:
        index = json.load(fh)
    return [
        Sample(
            np.asarray(item["ids"], dtype=np.int64),
            read_tensor(os.path.join(path, item["mel"])).astype(np.float64),
            read_tensor(os.path.join(path, item["f0"])).astype(np.float64),
        )
        for item in index
    ]
