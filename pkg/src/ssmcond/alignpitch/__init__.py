"""Pitch fusion (inference) and the training-only aligner (``.aligner``).

The aligner is deliberately not imported here so inference code that uses
pitch fusion never loads it.
"""

from .pitch import PitchParams, init_pitch, pitch_fuse, predict_f0

__all__ = ["PitchParams", "init_pitch", "pitch_fuse", "predict_f0"]
