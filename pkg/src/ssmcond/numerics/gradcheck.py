"""Compare tape gradients with central finite differences."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .tape import GradTape, value_of


@dataclass
class GradCheckResult:
    max_rel_error: float
    worst_index: int
    analytic: np.ndarray
    numeric: np.ndarray
    failed_index: int | None = None

    @property
    def finite(self) -> bool:
        return self.failed_index is None


def analytic_grad(f: Callable, params: np.ndarray) -> tuple[float, np.ndarray]:
    tape = GradTape()
    p = tape.leaf(np.array(params, dtype=np.float64))
    out = f(p)
    tape.backward(out)
    return float(value_of(out)), tape.grad(p)


def grad_check(
    f: Callable,
    params: np.ndarray,
    h: float = 1e-5,
    indices: Sequence[int] | None = None,
) -> GradCheckResult:
    """Max over coordinates of ``|a - n| / (|a| + |n| + 1e-12)``.

    ``f`` maps a flat parameter vector (array or ``Var``) to a scalar.
    A non-finite value of ``f`` ends the check with ``failed_index`` set.
    """
    if not 1e-7 <= h <= 1e-4:
        raise ValueError(f"step h={h} outside [1e-7, 1e-4]")
    params = np.array(params, dtype=np.float64)
    f0, g = analytic_grad(f, params)
    idx = range(params.size) if indices is None else indices
    numeric = np.zeros_like(params)
    if not np.isfinite(f0):
        return GradCheckResult(float("inf"), -1, g, numeric, failed_index=-1)
    worst, worst_i = 0.0, -1
    for i in idx:
        p = params.copy()
        p[i] += h
        fp = float(value_of(f(p)))
        p[i] -= 2 * h
        fm = float(value_of(f(p)))
        if not (np.isfinite(fp) and np.isfinite(fm)):
            return GradCheckResult(float("inf"), int(i), g, numeric, failed_index=int(i))
        numeric[i] = (fp - fm) / (2 * h)
        err = abs(g[i] - numeric[i]) / (abs(g[i]) + abs(numeric[i]) + 1e-12)
        if err > worst or worst_i < 0:
            worst, worst_i = err, int(i)
    return GradCheckResult(float(worst), worst_i, g, numeric)
