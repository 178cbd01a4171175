"""Walk nested parameter containers.

A parameter tree is a frozen dataclass whose fields are arrays, scalars,
other parameter dataclasses, or tuples of them. Array leaves are the
trainable tensors; everything else is carried through unchanged.
"""

from __future__ import annotations

import dataclasses
from typing import Callable, Iterator

import numpy as np

from . import ops
from .tape import Var


def _is_leaf(x) -> bool:
    return isinstance(x, (np.ndarray, Var))


def named_leaves(tree, prefix: str = "") -> Iterator[tuple[str, object]]:
    if _is_leaf(tree):
        yield prefix, tree
    elif dataclasses.is_dataclass(tree):
        for f in dataclasses.fields(tree):
            name = f"{prefix}.{f.name}" if prefix else f.name
            yield from named_leaves(getattr(tree, f.name), name)
    elif isinstance(tree, tuple):
        for i, item in enumerate(tree):
            yield from named_leaves(item, f"{prefix}.{i}")


def leaves(tree) -> list:
    return [leaf for _, leaf in named_leaves(tree)]


def tree_map(fn: Callable, tree):
    if _is_leaf(tree):
        return fn(tree)
    if dataclasses.is_dataclass(tree):
        changes = {f.name: tree_map(fn, getattr(tree, f.name)) for f in dataclasses.fields(tree)}
        return dataclasses.replace(tree, **changes)
    if isinstance(tree, tuple):
        return tuple(tree_map(fn, item) for item in tree)
    return tree


def tree_map_named(fn: Callable, tree, prefix: str = ""):
    if _is_leaf(tree):
        return fn(prefix, tree)
    if dataclasses.is_dataclass(tree):
        changes = {}
        for f in dataclasses.fields(tree):
            name = f"{prefix}.{f.name}" if prefix else f.name
            changes[f.name] = tree_map_named(fn, getattr(tree, f.name), name)
        return dataclasses.replace(tree, **changes)
    if isinstance(tree, tuple):
        return tuple(tree_map_named(fn, item, f"{prefix}.{i}") for i, item in enumerate(tree))
    return tree


def flatten(tree) -> np.ndarray:
    parts = [np.ravel(leaf) for leaf in leaves(tree)]
    return np.concatenate(parts) if parts else np.zeros(0)


def num_params(tree) -> int:
    return sum(int(np.size(leaf)) for leaf in leaves(tree))


def unflatten(flat, template):
    """Inverse of :func:`flatten`. ``flat`` may be a ``Var``; leaves then become ``Var`` slices."""
    offset = 0

    def take(leaf):
        nonlocal offset
        shape = np.shape(leaf)
        n = int(np.prod(shape)) if shape else 1
        if isinstance(flat, Var):
            out = ops.take_flat(flat, offset, shape)
        else:
            out = np.asarray(flat[offset:offset + n], dtype=np.float64).reshape(shape).copy()
        offset += n
        return out

    result = tree_map(take, template)
    if offset != np.size(flat if not isinstance(flat, Var) else flat.value):
        raise ValueError(f"flat vector has {np.size(flat)} entries, template needs {offset}")
    return result
