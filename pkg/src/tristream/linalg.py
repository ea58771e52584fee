"""Dense kernels shared by every layer.

Tensors are plain row-major ``numpy.ndarray`` values. float64 is the reference
precision; float32 is accepted for training runs but never for gradient checks.
Only bias-vector broadcasting over rows is performed implicitly.
"""

from __future__ import annotations

from typing import Sequence

import numpy as np
from scipy.special import expit

Tensor = np.ndarray


class ShapeError(ValueError):
    """Raised when operand shapes are incompatible."""


def as_tensor(x, dtype=np.float64) -> Tensor:
    """Return a contiguous array of ``dtype``; rejects NaN/Inf."""
    arr = np.ascontiguousarray(x, dtype=dtype)
    if not np.all(np.isfinite(arr)):
        raise ValueError("tensor contains non-finite values")
    return arr


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.ndim != 2 or b.ndim != 2:
        raise ShapeError(f"matmul expects 2-d operands, got {a.shape} and {b.shape}")
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul inner dimensions differ: {a.shape} x {b.shape}")
    return a @ b


def add_bias(x: Tensor, bias: Tensor) -> Tensor:
    """Add a bias vector to every row of ``x``."""
    if bias.ndim != 1 or x.shape[-1] != bias.shape[0]:
        raise ShapeError(f"bias {bias.shape} does not match rows of {x.shape}")
    return x + bias


def affine(x: Tensor, weight: Tensor, bias: Tensor | None) -> Tensor:
    """``x @ weight.T + bias`` for a batch of row vectors ``x``."""
    if x.shape[-1] != weight.shape[1]:
        raise ShapeError(f"input {x.shape} does not match weight {weight.shape}")
    out = x @ weight.T
    if bias is not None:
        out = out + bias
    return out


def sigmoid(x: Tensor) -> Tensor:
    return expit(x)


def tanh(x: Tensor) -> Tensor:
    return np.tanh(x)


def relu(x: Tensor) -> Tensor:
    return np.maximum(x, 0)


def softmax(x: Tensor, axis: int = -1) -> Tensor:
    """Numerically stable softmax along ``axis``."""
    shifted = x - np.max(x, axis=axis, keepdims=True)
    e = np.exp(shifted)
    return e / np.sum(e, axis=axis, keepdims=True)


def concat(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    if not tensors:
        raise ShapeError("concat of an empty list")
    ref = tensors[0].shape
    ax = axis % len(ref)
    for t in tensors[1:]:
        if t.ndim != len(ref) or any(
            d != r for i, (d, r) in enumerate(zip(t.shape, ref)) if i != ax
        ):
            raise ShapeError(
                f"concat shapes disagree off axis {axis}: "
                + ", ".join(str(u.shape) for u in tensors)
            )
    return np.concatenate(tensors, axis=ax)


def split(x: Tensor, widths: Sequence[int], axis: int = -1) -> list[Tensor]:
    """Inverse of :func:`concat` for known widths along ``axis``."""
    if sum(widths) != x.shape[axis]:
        raise ShapeError(f"widths {list(widths)} do not sum to {x.shape[axis]}")
    return np.split(x, np.cumsum(widths)[:-1], axis=axis)


def glorot_uniform(rng: np.random.Generator, shape: tuple[int, int]) -> Tensor:
    """Uniform in +-sqrt(6 / (fan_in + fan_out)) for a (fan_out, fan_in) matrix."""
    fan_out, fan_in = shape
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape)
