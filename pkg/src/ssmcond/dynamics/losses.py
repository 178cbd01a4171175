"""Training objective and evaluation metrics."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..alignpitch.aligner import monotonic_loss
from ..errors import ShapeError
from ..numerics import ops
from ..numerics.tape import value_of


@dataclass(frozen=True)
class LossWeights:
    lambda_mel: float = 1.0
    lambda_adv: float = 0.0
    lambda_align: float = 0.1

    def __post_init__(self):
        for name in ("lambda_mel", "lambda_adv", "lambda_align"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")
        if self.lambda_adv != 0:
            raise ValueError("no adversarial stack is implemented; lambda_adv must be 0")


def mel_l1(m_hat, m):
    if value_of(m_hat).shape != np.shape(value_of(m)):
        raise ShapeError(f"mel shapes differ: {value_of(m_hat).shape} vs {np.shape(value_of(m))}")
    return ops.mean_all(ops.abs_(ops.sub(m_hat, m)))


def total_loss(m_hat, m, alpha, w: LossWeights = LossWeights()):
    """``lambda_mel * mean|M_hat - M| + lambda_align * monotonic_loss(alpha)``."""
    loss = ops.scale(mel_l1(m_hat, m), w.lambda_mel)
    if w.lambda_align:
        loss = ops.add(loss, ops.scale(monotonic_loss(alpha), w.lambda_align))
    return loss


def eval_metrics(m_hat, m, f0_hat, f0_ref) -> dict:
    m_hat, m = np.asarray(value_of(m_hat)), np.asarray(value_of(m))
    f0_hat = np.asarray(value_of(f0_hat)).reshape(-1)
    f0_ref = np.asarray(value_of(f0_ref)).reshape(-1)
    if m_hat.shape != m.shape or f0_hat.shape != f0_ref.shape:
        raise ShapeError("eval_metrics: shapes do not match")
    return {
        "mel_l1": float(np.mean(np.abs(m_hat - m))),
        "f0_rmse": float(np.sqrt(np.mean((f0_hat - f0_ref) ** 2))),
    }
