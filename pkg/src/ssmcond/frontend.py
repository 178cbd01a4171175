"""Audio and token front-end: WAV ingestion, log-mel spectrogram, embeddings."""

from __future__ import annotations

import os
import wave
from dataclasses import dataclass

import numpy as np

from .config import EPS, HOP, MEL_FMAX, MEL_FMIN, N_FFT, N_MELS, SAMPLE_RATE
from .errors import (
    BitDepthError,
    ChannelCountError,
    NotWavError,
    SampleRateError,
    ShapeError,
    TokenRangeError,
)
from .numerics import ops
from .numerics.rng import Rng, conv_init, dense_init
from .numerics.tape import value_of


@dataclass(frozen=True, eq=False)
class Waveform:
    samples: np.ndarray
    sample_rate: int = SAMPLE_RATE

    def __post_init__(self):
        if self.sample_rate != SAMPLE_RATE:
            raise SampleRateError(f"expected {SAMPLE_RATE} Hz audio, got {self.sample_rate} Hz")
        if not np.isfinite(self.samples).all():
            raise ValueError("waveform contains non-finite samples")

    def __len__(self):
        return len(self.samples)


def load_wav(path: str | os.PathLike) -> Waveform:
    """Read 16-bit PCM mono 24 kHz WAV. No resampling or downmixing."""
    try:
        with wave.open(os.fspath(path), "rb") as wf:
            channels = wf.getnchannels()
            width = wf.getsampwidth()
            rate = wf.getframerate()
            raw = wf.readframes(wf.getnframes())
    except (wave.Error, EOFError) as exc:
        raise NotWavError(f"{path}: not a PCM RIFF/WAVE file ({exc})") from exc
    if channels != 1:
        raise ChannelCountError(f"{path}: expected mono, got {channels} channels")
    if width != 2:
        raise BitDepthError(f"{path}: expected 16-bit PCM, got {8 * width}-bit")
    if rate != SAMPLE_RATE:
        raise SampleRateError(f"{path}: expected {SAMPLE_RATE} Hz, got {rate} Hz")
    pcm = np.frombuffer(raw, dtype="<i2").astype(np.float64)
    return Waveform(pcm / 32768.0)


def write_wav(path: str | os.PathLike, samples: np.ndarray, sample_rate: int = SAMPLE_RATE) -> None:
    pcm = np.clip(np.round(np.asarray(samples) * 32768.0), -32768, 32767).astype("<i2")
    with wave.open(os.fspath(path), "wb") as wf:
        wf.setnchannels(1)
        wf.setsampwidth(2)
        wf.setframerate(sample_rate)
        wf.writeframes(pcm.tobytes())


# --- mel spectrogram ------------------------------------------------------------

def hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=np.float64) / 700.0)


def mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m, dtype=np.float64) / 2595.0) - 1.0)


def mel_band_edges(n_mels: int = N_MELS, fmin: float = MEL_FMIN, fmax: float = MEL_FMAX) -> np.ndarray:
    """``n_mels + 2`` HTK-spaced edge frequencies; band ``m`` peaks at ``edges[m + 1]``."""
    return mel_to_hz(np.linspace(hz_to_mel(fmin), hz_to_mel(fmax), n_mels + 2))


def mel_filterbank(n_mels: int = N_MELS, n_fft: int = N_FFT, sr: int = SAMPLE_RATE,
                   fmin: float = MEL_FMIN, fmax: float = MEL_FMAX) -> np.ndarray:
    """Triangular, area-normalized filters, shape ``n_mels x (n_fft // 2 + 1)``."""
    freqs = np.arange(n_fft // 2 + 1) * sr / n_fft
    edges = mel_band_edges(n_mels, fmin, fmax)
    lo, mid, hi = edges[:-2, None], edges[1:-1, None], edges[2:, None]
    rising = (freqs[None, :] - lo) / (mid - lo)
    falling = (hi - freqs[None, :]) / (hi - mid)
    tri = np.maximum(0.0, np.minimum(rising, falling))
    return tri * (2.0 / (hi - lo))


_FILTERBANK = mel_filterbank()
_WINDOW = np.hanning(N_FFT + 1)[:-1]  # periodic Hann


def num_frames(n_samples: int) -> int:
    return n_samples // HOP + 1


def frame_signal(samples: np.ndarray) -> np.ndarray:
    """Center reflect-pad by ``N_FFT // 2`` and cut windowed frames (T_m x N_FFT)."""
    x = np.asarray(samples, dtype=np.float64)
    pad = N_FFT // 2
    if len(x) > 1:
        padded = np.pad(x, pad, mode="reflect")
    else:
        padded = np.pad(x, pad, mode="edge")
    n = num_frames(len(x))
    idx = np.arange(N_FFT)[None, :] + HOP * np.arange(n)[:, None]
    return padded[idx] * _WINDOW


def compute_mel(w: Waveform) -> np.ndarray:
    """Log-mel spectrogram, shape ``80 x T_m`` with ``T_m = floor(T / 256) + 1``."""
    samples = w.samples if isinstance(w, Waveform) else np.asarray(w, dtype=np.float64)
    if len(samples) < 1:
        raise ShapeError("waveform is empty")
    frames = frame_signal(samples)
    power = np.abs(np.fft.rfft(frames, n=N_FFT, axis=1)) ** 2
    energy = power @ _FILTERBANK.T
    return np.ascontiguousarray(np.log(np.maximum(energy, EPS)).T)


# --- tokens ------------------------------------------------------------------------

def parse_tokens(text: str) -> list[int]:
    ids = [int(tok) for tok in text.split()]
    if any(i < 0 for i in ids):
        raise TokenRangeError("phoneme ids must be non-negative")
    return ids


def embed_tokens(ids, table):
    """Gather rows of ``table`` (vocab x d)."""
    ids = np.asarray(ids, dtype=np.int64).reshape(-1)
    vocab = value_of(table).shape[0]
    for pos, i in enumerate(ids):
        if not 0 <= i < vocab:
            raise TokenRangeError(f"token id {int(i)} at position {pos} outside vocab of size {vocab}")
    return ops.take_rows(table, ids)


# --- style embedding ---------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class StyleParams:
    conv: np.ndarray   # F x k (same-padded over time)
    w: np.ndarray      # F x d_s
    b: np.ndarray      # d_s


def init_style(rng: Rng, n_mels: int, d_s: int, k: int = 5) -> StyleParams:
    return StyleParams(conv_init(rng, n_mels, k), dense_init(rng, n_mels, d_s), np.zeros(d_s))


def frame_features(mel, p: StyleParams):
    """Per-frame encoder applied to every column of the mel: T_m x d_s."""
    x = ops.transpose(mel)
    return ops.tanh(ops.linear(ops.depthwise_conv1d(x, p.conv, "same"), p.w, p.b))


def style_embed(mel, p: StyleParams, frame_encoder=frame_features):
    """Mean over frames of ``frame_encoder``; returns a length-d_s vector."""
    if value_of(mel).ndim != 2 or value_of(mel).shape[1] < 1:
        raise ShapeError(f"style_embed needs an F x T_m mel with T_m >= 1, got {value_of(mel).shape}")
    pooled = ops.mean_rows(frame_encoder(mel, p))
    return ops.reshape(pooled, (value_of(pooled).shape[1],))
