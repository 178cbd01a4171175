"""Minimal reverse-mode gradient tape.

Operations in :mod:`ssmcond.numerics.ops` accept either plain arrays or
:class:`Var` handles. When any operand is a ``Var`` the op appends a node to
that variable's tape; plain arrays flow through untouched, so inference code
and training code share one implementation.
"""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np


class Var:
    """Array value registered on a :class:`GradTape`."""

    __slots__ = ("value", "tape", "index")
    # Make numpy defer to our reflected operators instead of building object arrays.
    __array_ufunc__ = None

    def __init__(self, value: np.ndarray, tape: "GradTape", index: int):
        self.value = value
        self.tape = tape
        self.index = index

    @property
    def shape(self):
        return self.value.shape

    @property
    def ndim(self):
        return self.value.ndim

    @property
    def size(self):
        return self.value.size

    def __len__(self):
        return len(self.value)

    def __repr__(self):
        return f"Var(index={self.index}, shape={self.value.shape})"

    def __add__(self, other):
        from . import ops
        return ops.add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        from . import ops
        return ops.sub(self, other)

    def __rsub__(self, other):
        from . import ops
        return ops.sub(other, self)

    def __mul__(self, other):
        from . import ops
        return ops.mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        from . import ops
        return ops.neg(self)


class _Node:
    __slots__ = ("out", "parents", "backward")

    def __init__(self, out: int, parents: tuple, backward: Callable):
        self.out = out
        self.parents = parents
        self.backward = backward


class GradTape:
    """Records primitive ops in creation order, replays them in reverse."""

    def __init__(self):
        self._nodes: list[_Node] = []
        self._next = 0
        self._adjoints: dict[int, np.ndarray] = {}
        self.last_order: list[int] = []

    def __len__(self):
        return len(self._nodes)

    def leaf(self, value) -> Var:
        value = np.asarray(value, dtype=np.float64)
        var = Var(value, self, self._next)
        self._next += 1
        return var

    def record(self, value: np.ndarray, parents: Sequence, backward: Callable) -> Var:
        var = Var(value, self, self._next)
        self._next += 1
        self._nodes.append(_Node(var.index, tuple(parents), backward))
        return var

    def backward(self, out: Var, seed: np.ndarray | None = None) -> None:
        if out.tape is not self:
            raise ValueError("output variable belongs to a different tape")
        if seed is None:
            seed = np.ones_like(out.value)
        adjoints = {out.index: np.asarray(seed, dtype=np.float64)}
        order = []
        for node in reversed(self._nodes):
            g = adjoints.get(node.out)
            if g is None:
                continue
            order.append(node.out)
            grads = node.backward(g)
            for parent, gp in zip(node.parents, grads):
                if gp is None or not isinstance(parent, Var):
                    continue
                prev = adjoints.get(parent.index)
                if prev is None:
                    adjoints[parent.index] = np.array(gp, dtype=np.float64, copy=True)
                else:
                    prev += gp
        self._adjoints = adjoints
        self.last_order = order

    def grad(self, var: Var) -> np.ndarray:
        g = self._adjoints.get(var.index)
        if g is None:
            return np.zeros_like(var.value)
        return g


def value_of(x):
    return x.value if isinstance(x, Var) else x


def tape_of(*xs) -> GradTape | None:
    for x in xs:
        if isinstance(x, Var):
            return x.tape
    return None
