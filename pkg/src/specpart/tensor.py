"""Dense n-dimensional float64 arrays plus the structural ops the network needs.

Tensors are plain C-order (row-major, last axis fastest) numpy float64 arrays.
The helpers below are the only structural operations the model relies on:
creation, band-axis slicing, last-axis concatenation and reshape. All of them
return fresh arrays and never mutate their inputs, so tensors can be treated
as values and shared freely across threads.
"""

from __future__ import annotations

from collections.abc import Sequence

import numpy as np

from .errors import BoundsError, ShapeError

Tensor = np.ndarray


def as_tensor(values) -> Tensor:
    """Materialize `values` as a fresh C-order float64 array."""
    return np.array(values, dtype=np.float64, order="C")


def tensor_filled(shape: Sequence[int], value: float) -> Tensor:
    """A tensor of the given shape with every element equal to `value`."""
    shape = tuple(int(s) for s in shape)
    if len(shape) == 0:
        raise ShapeError("tensor shape must have at least one axis")
    for axis, extent in enumerate(shape):
        if extent < 1:
            raise ShapeError(f"axis {axis} has non-positive extent {extent}")
    return np.full(shape, float(value), dtype=np.float64)


def slice_bands(t: Tensor, lo: int, hi: int) -> Tensor:
    """Copy of `t` restricted to bands [lo, hi) along the last axis."""
    bands = t.shape[-1]
    if not (0 <= lo < hi <= bands):
        raise BoundsError(f"band range [{lo}, {hi}) invalid for {bands} bands")
    return np.ascontiguousarray(t[..., lo:hi], dtype=np.float64)


def concat_last_axis(parts: Sequence[Tensor]) -> Tensor:
    """Concatenate tensors along the last axis; leading axes must agree."""
    if len(parts) == 0:
        raise ShapeError("cannot concatenate an empty list of tensors")
    lead = parts[0].shape[:-1]
    for i, p in enumerate(parts):
        if p.shape[:-1] != lead:
            raise ShapeError(
                f"part {i} has leading axes {p.shape[:-1]}, expected {lead}"
            )
    return np.concatenate([np.asarray(p, dtype=np.float64) for p in parts], axis=-1)


def reshape(t: Tensor, new_shape: Sequence[int]) -> Tensor:
    """Reshape preserving the row-major data sequence."""
    new_shape = tuple(int(s) for s in new_shape)
    if int(np.prod(new_shape)) != t.size:
        raise ShapeError(
            f"cannot reshape {t.size} elements into shape {new_shape}"
        )
    return np.ascontiguousarray(t).reshape(new_shape).copy()
