"""Activation allocation auditor.

Counts float elements of every buffer produced by a primitive op while an
auditor is active, and tracks how many are alive at once. Liveness comes from
CPython reference counting (``weakref.finalize``), so the counts are a
deterministic function of the code path, unlike OS-level RSS.
"""

from __future__ import annotations

import threading
import weakref

import numpy as np

_local = threading.local()


class ActivationAuditor:
    def __init__(self):
        self.live = 0
        self.peak = 0
        self.allocated = 0
        self.buffers = 0
        self._seen: dict[int, weakref.ref] = {}

    def _release(self, key: int, n: int) -> None:
        self.live -= n
        self._seen.pop(key, None)

    def track(self, arr: np.ndarray) -> None:
        key = id(arr)
        ref = self._seen.get(key)
        if ref is not None and ref() is arr:
            return
        n = int(arr.size)
        self._seen[key] = weakref.ref(arr)
        self.live += n
        self.allocated += n
        self.buffers += 1
        if self.live > self.peak:
            self.peak = self.live
        weakref.finalize(arr, self._release, key, n)

    def reset_peak(self) -> None:
        self.peak = self.live

    def __enter__(self):
        self._prev = getattr(_local, "auditor", None)
        _local.auditor = self
        return self

    def __exit__(self, *exc):
        _local.auditor = self._prev
        return False


def track(arr: np.ndarray) -> np.ndarray:
    aud = getattr(_local, "auditor", None)
    if aud is not None and isinstance(arr, np.ndarray):
        aud.track(arr)
    return arr
