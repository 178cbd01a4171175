"""SeqTensor conventions.

A SeqTensor is a C-contiguous, rank-2, float64 ``numpy.ndarray`` laid out
time-major (rows are time steps, columns are features).
"""

from __future__ import annotations

import numpy as np

from ..errors import NonFiniteError, ShapeError

SeqTensor = np.ndarray


def as_seq(x, name: str = "tensor") -> np.ndarray:
    arr = np.ascontiguousarray(x, dtype=np.float64)
    if arr.ndim != 2:
        raise ShapeError(f"{name} must be rank 2 (rows x cols), got shape {arr.shape}")
    return arr


def check_finite(x: np.ndarray, name: str = "tensor") -> np.ndarray:
    if not np.isfinite(x).all():
        bad = np.argwhere(~np.isfinite(x))[0]
        raise NonFiniteError(f"{name} has a non-finite value at index {tuple(int(i) for i in bad)}")
    return x


def zeros(rows: int, cols: int) -> np.ndarray:
    return np.zeros((rows, cols), dtype=np.float64)
