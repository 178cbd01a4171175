"""Model and runtime configuration."""

from __future__ import annotations

import dataclasses
import os
from dataclasses import dataclass

SAMPLE_RATE = 24000
N_FFT = 1024
HOP = 256
N_MELS = 80
MEL_FMIN = 0.0
MEL_FMAX = 12000.0
# Shared numerical floor: log-mel clamp and layer-norm epsilon.
EPS = 1e-5
FRAMES_PER_SECOND = SAMPLE_RATE / HOP  # 93.75

SEED_ENV = "SSMCOND_SEED"


@dataclass(frozen=True)
class ModelConfig:
    vocab: int = 64
    d: int = 16
    d_h: int = 16
    d_s: int = 8
    d_ssm: int = 96
    k: int = 5
    tau: float = 1.0
    n_mels: int = N_MELS
    text_layers: int = 6
    expressive_layers: int = 2
    temporal_layers: int = 2
    aligner_layers: int = 2
    aligner_heads: int = 4
    aligner_hidden: int = 256
    # Ablation switch: gate the temporal encoder fusion instead of the linear map.
    temporal_gated: bool = False
    state_bound: float = 1e3
    seed: int = 0

    def __post_init__(self):
        if self.tau <= 0:
            raise ValueError(f"tau must be positive, got {self.tau}")
        if self.k < 1:
            raise ValueError(f"conv kernel size must be >= 1, got {self.k}")
        if self.aligner_hidden % self.aligner_heads:
            raise ValueError(
                f"aligner_hidden={self.aligner_hidden} not divisible by "
                f"aligner_heads={self.aligner_heads}"
            )
        for name in ("vocab", "d", "d_h", "d_s", "d_ssm", "n_mels", "text_layers"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "ModelConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown model config keys: {sorted(unknown)}")
        return cls(**data)

    def replace(self, **changes) -> "ModelConfig":
        return dataclasses.replace(self, **changes)


def env_seed(default: int) -> int:
    """Seed from ``SSMCOND_SEED`` if set, else ``default``."""
    raw = os.environ.get(SEED_ENV)
    return int(raw) if raw not in (None, "") else default
