import csv
import io
import math

import numpy as np
import pytest
from numpy.testing import assert_allclose

from ssmcond.bench.harness import (
    SECTIONS, ScalingReport, ScalingRow, audit_memory, audit_offline, bench_breakdown, bench_scaling, gate_stats,
)
from ssmcond.bench.sweep import COLUMNS, SweepRow, all_finite, grid_points, rows_to_csv, runtime_monotone_in_d_ssm, sweep
from ssmcond.config import ModelConfig
from ssmcond.dynamics.train import TrainConfig
from ssmcond.encoders import GatedFusionParams, init_text_encoder, text_encode
from ssmcond.numerics import Rng

SMALL = ModelConfig(d_ssm=16, text_layers=1, expressive_layers=1, temporal_layers=1)


def test_breakdown_report():
    report = bench_breakdown(SMALL, 64, 128, repeats=3, stability_check=False)
    assert [r["module"] for r in report.rows()] == list(SECTIONS)
    assert sum(report.percent.values()) == pytest.approx(100.0, abs=0.1)
    assert report.percent["toy-decoder"] > 0
    assert report.warmup == 2 and report.repeats == 3


def test_breakdown_counts_deterministic():
    a = bench_breakdown(SMALL, 32, 64, repeats=3, stability_check=False)
    b = bench_breakdown(SMALL, 32, 64, repeats=3, stability_check=False)
    assert a.elements == b.elements


def test_breakdown_rejects_few_repeats():
    with pytest.raises(ValueError):
        bench_breakdown(SMALL, 8, 8, repeats=2)


def test_scaling_sanity_row_and_element_counts():
    report = bench_scaling(SMALL, [256, 256, 512, 1024], repeats=1, diagnose=False)
    c = [r.elements for r in report.rows]
    assert c[0] == c[1]
    assert report.length_ratios() == [1.0, 2.0, 2.0]
    # Counts are affine in T: a per-frame slope plus per-call constants.
    assert c[3] - c[2] == 2 * (c[2] - c[1])
    assert all(1.9 <= r <= 2.0 for r in report.element_ratios()[1:])


def test_scaling_rejects_bad_lengths():
    with pytest.raises(ValueError):
        bench_scaling(SMALL, [512])
    with pytest.raises(ValueError):
        bench_scaling(SMALL, [512, 256])


def test_scaling_report_band():
    rows = [ScalingRow(n, t, t, 0, {}) for n, t in [(1, 1.0), (2, 2.25), (4, 5.3)]]
    report = ScalingReport(rows)
    assert report.pair_passes() == [True, False]
    assert not report.passed
    assert ScalingReport(rows[:2]).passed


def test_memory_offline_linear_and_empty():
    rows = audit_memory(SMALL, [500, 1000], "offline")
    assert 1.9 <= rows[1].peak / rows[0].peak <= 2.1
    empty = audit_offline(SMALL, 0)
    assert empty.peak == empty.baseline == 0


def test_memory_stream_constant():
    rows = audit_memory(SMALL, [1000, 5000], "stream", lookahead=47)
    assert rows[0].peak == rows[1].peak


def test_memory_rejects_mode():
    with pytest.raises(ValueError):
        audit_memory(SMALL, [10], "gpu")


def test_gate_stats_zero_weights():
    cfg = ModelConfig(d=4, d_h=4, d_s=3, d_ssm=4, k=3, text_layers=1)
    p = init_text_encoder(Rng(0), cfg)
    p = type(p)(p.proj_w, p.proj_b, p.fwd, p.bwd, GatedFusionParams(np.zeros((8, 8)), p.fusion.w_o), p.adaln)
    _, gates = text_encode(Rng(1).normal((6, 4)), np.zeros(3), p)
    stats = gate_stats([gates])
    assert stats["mean_fwd"] == 0.5 and stats["mean_bwd"] == 0.5 and stats["var"] == 0.0


def test_gate_stats_saturated():
    stats = gate_stats([1.0 / (1.0 + np.exp(-np.full((3, 4), 40.0)))])
    assert stats["mean_fwd"] == pytest.approx(1.0, abs=1e-6)
    assert stats["mean_bwd"] == pytest.approx(1.0, abs=1e-6)


def test_gate_stats_recomputation_oracle():
    rng = Rng(2)
    cfg = ModelConfig(d=4, d_h=4, d_s=3, d_ssm=4, k=3, text_layers=1)
    p = init_text_encoder(rng, cfg)
    traces = [np.asarray(text_encode(rng.normal((n, 4)), rng.normal((3,)), p)[1]) for n in (3, 5)]
    fwd = [v for t in traces for row in t for v in row[:4]]
    bwd = [v for t in traces for row in t for v in row[4:]]
    stats = gate_stats(traces)
    assert stats["mean_fwd"] == pytest.approx(sum(fwd) / len(fwd), abs=1e-12)
    assert stats["mean_bwd"] == pytest.approx(sum(bwd) / len(bwd), abs=1e-12)
    assert 0 < stats["mean_fwd"] < 1 and 0 < stats["mean_bwd"] < 1
    assert stats["positions"] == 8


def test_gate_stats_input_checks():
    with pytest.raises(ValueError):
        gate_stats([])
    with pytest.raises(ValueError):
        gate_stats([np.zeros((2, 3))])


def test_grid_points():
    assert len(grid_points({"d_ssm": [64, 96, 128, 160], "k": [3, 5, 7], "tau": [0.7, 1.0, 1.3]})) == 36
    assert grid_points({"d_ssm": [8]}) == [{"d_ssm": 8, "k": 5, "tau": 1.0}]
    with pytest.raises(ValueError):
        grid_points({"heads": [2]})


def test_single_point_sweep_csv():
    base = ModelConfig(d_ssm=8, text_layers=1, expressive_layers=1, temporal_layers=1, aligner_hidden=16)
    rows = sweep({"d_ssm": [8], "k": [3], "tau": [1.0]}, base, TrainConfig(steps=2, lr=3e-3, seed=7),
                 n_frames=64, repeats=1)
    assert len(rows) == 1 and all_finite(rows)
    table = list(csv.reader(io.StringIO(rows_to_csv(rows))))
    assert table[0] == COLUMNS
    assert table[1][:3] == ["8", "3", "1.0"]


def test_monotone_check():
    def row(d, t):
        return SweepRow(d, 3, 1.0, 1, 1.0, 0.5, t, 10)

    assert runtime_monotone_in_d_ssm([row(64, 1.0), row(96, 0.95), row(128, 1.2)]) == []
    problems = runtime_monotone_in_d_ssm([row(64, 1.0), row(96, 0.8)])
    assert len(problems) == 1 and "64->96" in problems[0]
    assert not all_finite([SweepRow(64, 3, 1.0, 1, 1.0, math.nan, 1.0, 10)])
