"""Runtime breakdown, scaling check, activation-memory audit and gate statistics.

Wall-clock numbers vary between runs; element counts from the auditor do not.
Throughput is reported per conditioning frame: there is no waveform decoder,
so no real-time factor against audio duration.
"""

from __future__ import annotations

import statistics
import time
from dataclasses import dataclass, field

import numpy as np

from ..config import ModelConfig
from ..dynamics.conditioning import assemble_conditioning, expand_uniform, temporal_predict, toy_decode
from ..encoders import expressive_encode, temporal_encode, text_encode
from ..alignpitch.pitch import pitch_fuse, predict_f0
from ..frontend import embed_tokens, style_embed
from ..model import ConditioningParams, condition, init_conditioning
from ..numerics.audit import ActivationAuditor
from ..numerics.rng import Rng
from ..streaming import CausalEncoderParams, open_session_frames

SECTIONS = ("text", "expressive", "temporal", "alignstub", "dynamics", "toy-decoder")
WARMUP = 2


def synthetic_inputs(cfg: ModelConfig, n_tokens: int, n_frames: int, seed: int = 0):
    rng = Rng(seed)
    ids = rng.integers(0, cfg.vocab, (n_tokens,))
    mel = rng.normal((cfg.n_mels, n_frames), scale=2.0) - 5.0
    return ids, mel


def _timed(fn, repeats: int, warmup: int = WARMUP):
    for _ in range(warmup):
        fn()
    times = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return times


def _sections(p: ConditioningParams, ids, mel):
    """Stage closures in pipeline order; each reads the previous stage's output."""
    cache = {}

    def text():
        x = embed_tokens(ids, p.embedding)
        cache["h_ts"], _ = text_encode(x, cache["e"], p.text)

    def expressive():
        # The style vector is computed from the same reference mel, so it is timed here.
        cache["e"] = style_embed(mel, p.style)
        cache["h_e"] = expressive_encode(mel, cache["e"], p.expressive)

    def temporal():
        cache["h_b"] = temporal_encode(cache["e"], mel.shape[1], p.temporal)
        cache["h_p"] = pitch_fuse(cache["h_e"], cache["h_b"], p.pitch)
        cache["f0"] = predict_f0(cache["h_p"], p.pitch.w_f, p.pitch.b_f)

    def alignstub():
        cache["h_a"] = expand_uniform(cache["h_ts"], mel.shape[1])

    def dynamics():
        h_tm = temporal_predict(cache["h_a"], p.dynamics)
        cache["cond"] = assemble_conditioning(h_tm, cache["h_p"], p.dynamics)

    def decoder():
        cache["mel_hat"] = toy_decode(cache["cond"], p.decoder)

    order = [("expressive", expressive), ("text", text), ("temporal", temporal),
             ("alignstub", alignstub), ("dynamics", dynamics), ("toy-decoder", decoder)]
    return order


@dataclass
class BenchReport:
    median_s: dict[str, float]
    percent: dict[str, float]
    elements: dict[str, int]
    repeats: int
    warmup: int = WARMUP
    warnings: list[str] = field(default_factory=list)
    meta: dict = field(default_factory=dict)

    @property
    def total_s(self) -> float:
        return sum(self.median_s.values())

    def rows(self) -> list[dict]:
        return [
            {"module": name, "median_s": self.median_s[name], "percent": self.percent[name],
             "elements": self.elements[name]}
            for name in SECTIONS
        ]


def _breakdown_once(p, ids, mel, repeats):
    stages = _sections(p, ids, mel)
    elements = {}
    with ActivationAuditor() as aud:
        for name, fn in stages:
            before = aud.allocated
            fn()
            elements[name] = aud.allocated - before
    times = {name: [] for name, _ in stages}
    for i in range(WARMUP + repeats):
        for name, fn in stages:
            t0 = time.perf_counter()
            fn()
            if i >= WARMUP:
                times[name].append(time.perf_counter() - t0)
    return {name: statistics.median(v) for name, v in times.items()}, elements


def bench_breakdown(cfg: ModelConfig, n_tokens: int, n_frames: int, repeats: int = 5,
                    seed: int = 0, stability_check: bool = True) -> BenchReport:
    if repeats < 3:
        raise ValueError(f"repeats must be >= 3, got {repeats}")
    p = init_conditioning(cfg, seed)
    ids, mel = synthetic_inputs(cfg, n_tokens, n_frames, seed)
    medians, elements = _breakdown_once(p, ids, mel, repeats)
    total = sum(medians.values())
    percent = {name: 100.0 * medians[name] / total for name in SECTIONS}
    warnings = []
    if stability_check:
        again, _ = _breakdown_once(p, ids, mel, 2 * repeats)
        for name in SECTIONS:
            a, b = medians[name], again[name]
            if abs(b - a) > 0.2 * max(a, 1e-12):
                warnings.append(f"unstable timing for {name}: median {a:.3g}s at R={repeats}, "
                                f"{b:.3g}s at R={2 * repeats}")
    return BenchReport(
        {name: medians[name] for name in SECTIONS}, percent,
        {name: elements[name] for name in SECTIONS}, repeats, WARMUP, warnings,
        {"T_x": n_tokens, "T_m": n_frames, "unit": "seconds per utterance (conditioning only)"},
    )


# --- scaling ---------------------------------------------------------------------------

@dataclass
class ScalingRow:
    n_frames: int
    best_s: float      # minimum CPU time over the measured rounds
    median_s: float    # median CPU time, reported alongside
    elements: int
    per_module_s: dict[str, float]


@dataclass
class ScalingReport:
    rows: list[ScalingRow]
    low: float = 0.85
    high: float = 1.15

    def ratios(self) -> list[float]:
        return [b.best_s / a.best_s for a, b in zip(self.rows, self.rows[1:])]

    def median_ratios(self) -> list[float]:
        return [b.median_s / a.median_s for a, b in zip(self.rows, self.rows[1:])]

    def length_ratios(self) -> list[float]:
        return [b.n_frames / a.n_frames for a, b in zip(self.rows, self.rows[1:])]

    def element_ratios(self) -> list[float]:
        return [b.elements / a.elements for a, b in zip(self.rows, self.rows[1:])]

    def pair_passes(self) -> list[bool]:
        return [self.low * r <= q <= self.high * r for q, r in zip(self.ratios(), self.length_ratios())]

    @property
    def passed(self) -> bool:
        return all(self.pair_passes())

    def diagnosis(self) -> list[str]:
        lines = []
        for a, b in zip(self.rows, self.rows[1:]):
            if not a.per_module_s or not b.per_module_s:
                continue
            parts = ", ".join(
                f"{name} {b.per_module_s[name] / max(a.per_module_s[name], 1e-12):.2f}"
                for name in SECTIONS
            )
            lines.append(f"T {a.n_frames}->{b.n_frames}: {parts}")
        return lines


def bench_scaling(cfg: ModelConfig, lengths, repeats: int = 5, seed: int = 0,
                  token_ratio: float = 1.0, diagnose: bool = True) -> ScalingReport:
    """Time the full conditioning stack at each length (T_m = T, T_x = token_ratio * T).

    Lengths are interleaved within each round, so slow drift in host load
    touches all of them alike, and each call is timed in process CPU time.
    The cost estimate per length is the fastest of ``repeats`` rounds after
    two warmups: on a shared host the median absorbs contention bursts that
    have nothing to do with the algorithm, while the minimum tracks its
    intrinsic cost. Medians stay in the report.

    A pair passes when the time ratio lies within 15% of the length ratio,
    i.e. [1.7, 2.3] for doublings. On failure the per-module split is
    measured as well so :meth:`ScalingReport.diagnosis` can point at a stage.
    """
    lengths = list(lengths)
    if len(lengths) < 2 or any(b < a for a, b in zip(lengths, lengths[1:])):
        raise ValueError("lengths must be ascending with at least two entries")
    p = init_conditioning(cfg, seed)
    inputs = [synthetic_inputs(cfg, max(1, int(round(token_ratio * n))), n, seed) for n in lengths]
    counts = []
    for ids, mel in inputs:
        with ActivationAuditor() as aud:
            condition(p, ids, mel)
        counts.append(aud.allocated)
    times = [[] for _ in lengths]
    for round_ in range(WARMUP + repeats):
        for i, (ids, mel) in enumerate(inputs):
            t0 = time.process_time()
            condition(p, ids, mel)
            if round_ >= WARMUP:
                times[i].append(time.process_time() - t0)
    rows = [ScalingRow(n, min(t), statistics.median(t), c, {})
            for n, t, c in zip(lengths, times, counts)]
    report = ScalingReport(rows)
    if diagnose and not report.passed:
        for row, (ids, mel) in zip(rows, inputs):
            row.per_module_s, _ = _breakdown_once(p, ids, mel, 3)
    return report


# --- memory ------------------------------------------------------------------------------

@dataclass
class MemoryRow:
    n_frames: int
    peak: int
    baseline: int


def audit_offline(cfg: ModelConfig, n_frames: int, seed: int = 0, token_ratio: float = 1.0) -> MemoryRow:
    p = init_conditioning(cfg, seed)
    if n_frames == 0:
        with ActivationAuditor() as aud:
            pass
        return MemoryRow(0, aud.peak, aud.live)
    ids, mel = synthetic_inputs(cfg, max(1, int(round(token_ratio * n_frames))), n_frames, seed)
    with ActivationAuditor() as aud:
        baseline = aud.live
        condition(p, ids, mel)
    return MemoryRow(n_frames, aud.peak, baseline)


def audit_stream(cfg: ModelConfig, n_frames: int, lookahead: int = 47, chunk: int = 64,
                 seed: int = 0) -> MemoryRow:
    """Peak live activation elements of one session fed ``n_frames`` in fixed chunks.

    Released frames are reduced to a checksum and dropped, so only the
    session's own footprint and per-call temporaries are counted.
    """
    p = init_conditioning(cfg, seed)
    enc = CausalEncoderParams.from_text_encoder(p.text)
    rng = Rng(seed).child(1)
    block = rng.normal((chunk, enc.d_in))
    with ActivationAuditor() as aud:
        session = open_session_frames(enc, lookahead)
        baseline = aud.live
        checksum = 0.0
        done = 0
        while done < n_frames:
            size = min(chunk, n_frames - done)
            checksum += float(session.feed(block[:size]).sum())
            done += size
        checksum += float(session.close().sum())
    return MemoryRow(n_frames, aud.peak, baseline)


def audit_memory(cfg: ModelConfig, lengths, mode: str = "offline", lookahead: int = 47,
                 chunk: int = 64, seed: int = 0) -> list[MemoryRow]:
    if mode == "offline":
        return [audit_offline(cfg, n, seed) for n in lengths]
    if mode == "stream":
        return [audit_stream(cfg, n, lookahead, chunk, seed) for n in lengths]
    raise ValueError(f"mode must be 'offline' or 'stream', got {mode!r}")


# --- gate statistics -------------------------------------------------------------------

def gate_stats(traces) -> dict:
    """Mean forward-half and backward-half gate activation over all positions."""
    traces = [np.asarray(t) for t in traces]
    if not traces:
        raise ValueError("gate_stats needs at least one trace")
    width = traces[0].shape[1]
    if width % 2 or any(t.ndim != 2 or t.shape[1] != width for t in traces):
        raise ValueError("gate traces must all be T x 2d_h")
    stacked = np.concatenate(traces, axis=0)
    half = width // 2
    fwd, bwd = stacked[:, :half], stacked[:, half:]
    return {
        "mean_fwd": float(fwd.mean()),
        "mean_bwd": float(bwd.mean()),
        "var": float(stacked.var()),
        "var_fwd": float(fwd.var()),
        "var_bwd": float(bwd.var()),
        "positions": int(stacked.shape[0]),
    }
