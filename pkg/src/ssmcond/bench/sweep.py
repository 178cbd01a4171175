"""Hyperparameter sensitivity sweep over state size, kernel width and gate temperature."""

from __future__ import annotations

import csv
import io
import itertools
import math
import time
from dataclasses import dataclass

from ..config import ModelConfig
from ..dynamics.data import Sample, make_synthetic_dataset
from ..dynamics.train import TrainConfig, train
from ..model import condition
from .harness import WARMUP, synthetic_inputs

DEFAULT_GRID = {
    "d_ssm": [64, 96, 128, 160],
    "k": [3, 5, 7],
    "tau": [0.7, 1.0, 1.3],
}
COLUMNS = ["d_ssm", "k", "tau", "train_steps", "initial_loss", "final_loss", "runtime_s", "frames"]


@dataclass
class SweepRow:
    d_ssm: int
    k: int
    tau: float
    train_steps: int
    initial_loss: float
    final_loss: float
    runtime_s: float
    frames: int

    def as_list(self) -> list:
        return [self.d_ssm, self.k, self.tau, self.train_steps, repr(self.initial_loss),
                repr(self.final_loss), repr(self.runtime_s), self.frames]


def grid_points(grid: dict) -> list[dict]:
    keys = ["d_ssm", "k", "tau"]
    unknown = set(grid) - set(keys)
    if unknown:
        raise ValueError(f"unknown grid axes: {sorted(unknown)}")
    axes = [list(grid.get(key, [getattr(ModelConfig(), key)])) for key in keys]
    return [dict(zip(keys, combo)) for combo in itertools.product(*axes)]


def sweep(grid: dict = DEFAULT_GRID, base: ModelConfig = ModelConfig(),
          train_cfg: TrainConfig = TrainConfig(steps=20, lr=3e-3, seed=7),
          dataset: list[Sample] | None = None, n_frames: int = 1024, repeats: int = 5,
          seed: int = 0) -> list[SweepRow]:
    """For each grid point: fresh-seeded short training run, then timed inference.

    Inference is timed on ``n_frames`` frames (and as many tokens) after all
    points are trained. Points are interleaved within each of ``repeats``
    rounds after two warmups, each call is timed in process CPU time, and
    the runtime column is the fastest round, so host contention that hits
    one point and not its neighbours does not reorder the grid.
    """
    if dataset is None:
        dataset = make_synthetic_dataset(4, seed=7, vocab=base.vocab)
    trained = []
    for point in grid_points(grid):
        cfg = base.replace(**point, seed=seed)
        result = train(dataset, train_cfg, model_cfg=cfg)
        trained.append((cfg, result, synthetic_inputs(cfg, n_frames, n_frames, seed)))
    times = [[] for _ in trained]
    for round_ in range(WARMUP + repeats):
        for i, (_, result, (ids, mel)) in enumerate(trained):
            t0 = time.process_time()
            condition(result.ema.cond, ids, mel)
            if round_ >= WARMUP:
                times[i].append(time.process_time() - t0)
    return [SweepRow(cfg.d_ssm, cfg.k, cfg.tau, train_cfg.steps, result.losses[0], result.losses[-1],
                     min(t), n_frames)
            for (cfg, result, _), t in zip(trained, times)]


def rows_to_csv(rows: list[SweepRow]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(COLUMNS)
    for row in rows:
        writer.writerow(row.as_list())
    return buf.getvalue()


def runtime_monotone_in_d_ssm(rows: list[SweepRow], band: float = 0.10) -> list[str]:
    """Violations of 'runtime non-decreasing in d_ssm' beyond a relative noise band."""
    groups: dict[tuple, list[SweepRow]] = {}
    for row in rows:
        groups.setdefault((row.k, row.tau), []).append(row)
    problems = []
    for (k, tau), group in sorted(groups.items()):
        group.sort(key=lambda r: r.d_ssm)
        for a, b in zip(group, group[1:]):
            if b.runtime_s < (1.0 - band) * a.runtime_s:
                problems.append(
                    f"k={k} tau={tau}: d_ssm {a.d_ssm}->{b.d_ssm} runtime {a.runtime_s:.4g}s -> {b.runtime_s:.4g}s"
                )
    return problems


def all_finite(rows: list[SweepRow]) -> bool:
    return all(math.isfinite(r.final_loss) and math.isfinite(r.runtime_s) for r in rows)
