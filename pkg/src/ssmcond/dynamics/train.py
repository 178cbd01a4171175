"""Desk-scale training loop: full forward, tape backward, AdamW, cosine LR, EMA."""

from __future__ import annotations

import csv
import dataclasses
import math
import os
from dataclasses import dataclass

import numpy as np

from ..alignpitch.aligner import AlignerParams, align, init_aligner, perturb_alpha
from ..config import ModelConfig
from ..errors import TrainingDivergedError
from ..model import ConditioningParams, dynamics_stage, encode, init_conditioning, save_checkpoint
from ..numerics import ops
from ..numerics.rng import Rng
from ..numerics.tape import GradTape, value_of
from ..numerics.tree import leaves, tree_map
from .conditioning import toy_decode
from .data import Sample
from .losses import LossWeights, total_loss


@dataclass(frozen=True)
class TrainConfig:
    lr: float = 1e-4
    weight_decay: float = 1e-4
    warmup_steps: int | None = None   # None: max(steps // 20, 10)
    clip_norm: float = 1.0
    ema_decay: float = 0.999
    steps: int = 200
    batch: int = 4
    seed: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    alpha_perturbation: float = 0.0

    def __post_init__(self):
        if self.lr < 0 or self.weight_decay < 0:
            raise ValueError("lr and weight_decay must be non-negative")
        if self.clip_norm <= 0 or self.steps < 1 or self.batch < 1:
            raise ValueError("clip_norm, steps and batch must be positive")
        if not 0.0 <= self.ema_decay < 1.0:
            raise ValueError(f"ema_decay must lie in [0, 1), got {self.ema_decay}")

    @property
    def warmup(self) -> int:
        return self.warmup_steps if self.warmup_steps is not None else max(self.steps // 20, 10)

    @classmethod
    def from_dict(cls, data: dict) -> "TrainConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown train config keys: {sorted(unknown)}")
        return cls(**data)


@dataclass(frozen=True, eq=False)
class TrainParams:
    cond: ConditioningParams
    aligner: AlignerParams


def init_train_params(cfg: ModelConfig, seed: int | None = None) -> TrainParams:
    seed = cfg.seed if seed is None else seed
    return TrainParams(
        init_conditioning(cfg, seed),
        init_aligner(Rng(seed).child(100), cfg.d_h, cfg.aligner_hidden, cfg.aligner_heads, cfg.aligner_layers),
    )


def lr_at(step: int, cfg: TrainConfig) -> float:
    """Linear warmup to ``cfg.lr`` then cosine decay to zero at ``cfg.steps``."""
    warm = cfg.warmup
    if step < warm:
        return cfg.lr * (step + 1) / warm
    span = max(cfg.steps - warm, 1)
    progress = min((step - warm) / span, 1.0)
    return cfg.lr * 0.5 * (1.0 + math.cos(math.pi * progress))


def global_norm(grads) -> float:
    return math.sqrt(sum(float(np.sum(g * g)) for g in grads))


def clip_by_global_norm(grads, max_norm: float):
    """Returns ``(clipped, pre_clip_norm)``."""
    norm = global_norm(grads)
    if norm > max_norm:
        factor = max_norm / norm
        return [g * factor for g in grads], norm
    return list(grads), norm


class AdamW:
    """Adaptive moments with decoupled weight decay (scaled by the step's lr)."""

    def __init__(self, params, cfg: TrainConfig):
        self.cfg = cfg
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]
        self.t = 0

    def step(self, params, grads, lr: float):
        c = self.cfg
        self.t += 1
        bc1 = 1.0 - c.beta1 ** self.t
        bc2 = 1.0 - c.beta2 ** self.t
        out = []
        for i, (p, g) in enumerate(zip(params, grads)):
            self.m[i] = c.beta1 * self.m[i] + (1.0 - c.beta1) * g
            self.v[i] = c.beta2 * self.v[i] + (1.0 - c.beta2) * g * g
            update = (self.m[i] / bc1) / (np.sqrt(self.v[i] / bc2) + c.adam_eps)
            out.append(p - lr * update - lr * c.weight_decay * p)
        return out


def ema_update(ema, params, decay: float):
    return [e + (1.0 - decay) * (p - e) for e, p in zip(ema, params)]


def _rebuild(template, flat):
    it = iter(flat)
    return tree_map(lambda _: next(it), template)


def sample_loss(p: TrainParams, sample: Sample, w: LossWeights, rng: Rng | None = None,
                perturbation: float = 0.0):
    """One utterance through the full training forward pass; returns the scalar loss."""
    feats = encode(p.cond, sample.ids, sample.mel)
    alpha, _ = align(feats.h_e, feats.h_ts, p.aligner)
    if perturbation > 0.0:
        alpha = perturb_alpha(alpha, perturbation, rng)
    h_a = ops.matmul(alpha, feats.h_ts)
    cond = dynamics_stage(h_a, feats, p.cond)
    return total_loss(toy_decode(cond, p.cond.decoder), sample.mel, alpha, w)


def batch_loss_and_grads(p: TrainParams, batch: list[Sample], w: LossWeights,
                         rng: Rng | None = None, perturbation: float = 0.0):
    tape = GradTape()
    flat = leaves(p)
    var_params = _rebuild(p, [tape.leaf(x) for x in flat])
    total = None
    for s in batch:
        loss = sample_loss(var_params, s, w, rng, perturbation)
        total = loss if total is None else ops.add(total, loss)
    total = ops.scale(total, 1.0 / len(batch))
    tape.backward(total)
    return float(value_of(total)), [tape.grad(v) for v in leaves(var_params)]


@dataclass
class TrainResult:
    params: TrainParams
    ema: TrainParams
    log: list[dict]

    @property
    def losses(self) -> list[float]:
        return [row["loss"] for row in self.log]


def train(dataset: list[Sample], cfg: TrainConfig, w: LossWeights = LossWeights(),
          model_cfg: ModelConfig = ModelConfig(), params: TrainParams | None = None,
          out_dir: str | os.PathLike | None = None) -> TrainResult:
    """Run ``cfg.steps`` optimizer steps, cycling through ``dataset`` in order."""
    if not dataset:
        raise ValueError("training needs a non-empty dataset")
    if params is None:
        params = init_train_params(model_cfg, cfg.seed)
    flat = [np.array(x, dtype=np.float64) for x in leaves(params)]
    ema = [x.copy() for x in flat]
    opt = AdamW(flat, cfg)
    rng = Rng(cfg.seed).child(200)
    log = []
    cursor = 0
    for step in range(cfg.steps):
        batch = [dataset[(cursor + i) % len(dataset)] for i in range(cfg.batch)]
        cursor = (cursor + cfg.batch) % len(dataset)
        loss, grads = batch_loss_and_grads(
            _rebuild(params, flat), batch, w, rng, cfg.alpha_perturbation
        )
        if not math.isfinite(loss):
            raise TrainingDivergedError(step, loss)
        grads, norm = clip_by_global_norm(grads, cfg.clip_norm)
        lr = lr_at(step, cfg)
        flat = opt.step(flat, grads, lr)
        ema = ema_update(ema, flat, cfg.ema_decay)
        log.append({"step": step, "loss": loss, "lr": lr, "grad_norm": norm})

    result = TrainResult(_rebuild(params, flat), _rebuild(params, ema), log)
    if out_dir is not None:
        write_run(result, model_cfg, cfg, out_dir)
    return result


def write_loss_csv(log: list[dict], path: str | os.PathLike) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["step", "loss", "lr", "grad_norm"])
        for row in log:
            writer.writerow([row["step"], repr(row["loss"]), repr(row["lr"]), repr(row["grad_norm"])])


def write_run(result: TrainResult, model_cfg: ModelConfig, cfg: TrainConfig, out_dir) -> None:
    os.makedirs(out_dir, exist_ok=True)
    write_loss_csv(result.log, os.path.join(out_dir, "loss.csv"))
    save_checkpoint(
        os.path.join(out_dir, "checkpoint"),
        {"cond": result.params.cond, "aligner": result.params.aligner, "ema.cond": result.ema.cond},
        model_cfg,
        meta={"train": dataclasses.asdict(cfg), "final_loss": result.log[-1]["loss"]},
    )
