#
# Copyright 2026 py-umc authors
#
# This Source Code Form is subject to the terms of the Mozilla Public
# License, v. 2.0. If a copy of the MPL was not distributed with this
# file, You can obtain one at http://mozilla.org/MPL/2.0/.
#
""" Differentiable operations

    Each operation computes its result with numpy and, when a tape is
    active and one of its inputs requires a gradient, registers its
    backward rule on the tape.
"""
import numpy as np

from typing import Optional, Sequence, Tuple, Union

from ..exceptions import DimensionError, DegenerateInputError
from .tensor import Tensor, active_tape, default_dtype

TensorLike = Union[Tensor, np.ndarray, float, int]


def as_tensor(x: TensorLike) -> Tensor:
    """ Wrap constants as tensors that do not require gradient
    """
    if isinstance(x, Tensor):
        return x
    return Tensor(x)


def _unbroadcast(grad: np.ndarray, shape: Tuple[int, ...]) -> np.ndarray:
    """ Sum a broadcast gradient back to the input shape
    """
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


def _result(data: np.ndarray, inputs: Sequence[Tensor], backward) -> Tensor:
    out = Tensor.wrap(data)
    tape = active_tape()
    if tape is not None and any(t.requires_grad for t in inputs):
        out.requires_grad = True
        tape.record(out, tuple(inputs), backward)
    return out


#
# Elementwise
#

def add(a: TensorLike, b: TensorLike) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)

    def backward(g):
        return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)

    return _result(a.data + b.data, (a, b), backward)


def sub(a: TensorLike, b: TensorLike) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)

    def backward(g):
        return _unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)

    return _result(a.data - b.data, (a, b), backward)


def mul(a: TensorLike, b: TensorLike) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)

    def backward(g):
        return _unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)

    return _result(a.data * b.data, (a, b), backward)


def scale(a: Tensor, c: float) -> Tensor:
    c = a.data.dtype.type(c)

    def backward(g):
        return (g * c,)

    return _result(a.data * c, (a,), backward)


def _sigmoid(x: np.ndarray) -> np.ndarray:
    # tanh form does not overflow for large |x|
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def silu(x: Tensor) -> Tensor:
    """ x * sigmoid(x)
    """
    s = _sigmoid(x.data)

    def backward(g):
        return (g * (s * (1.0 + x.data * (1.0 - s))),)

    return _result(x.data * s, (x,), backward)


#
# Linear algebra and shapes
#

def matmul(a: TensorLike, b: TensorLike) -> Tensor:
    """ Matrix product over the last two axes, leading axes broadcast
    """
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim < 2 or b.ndim < 2 or a.shape[-1] != b.shape[-2]:
        raise DimensionError("matmul: incompatible shapes %s and %s" % (a.shape, b.shape))

    def backward(g):
        ga = _unbroadcast(np.matmul(g, np.swapaxes(b.data, -1, -2)), a.shape)
        gb = _unbroadcast(np.matmul(np.swapaxes(a.data, -1, -2), g), b.shape)
        return ga, gb

    return _result(np.matmul(a.data, b.data), (a, b), backward)


def transpose(a: Tensor, axes: Optional[Sequence[int]] = None) -> Tensor:
    """ Permute axes, by default swap the last two
    """
    if axes is None:
        axes = list(range(a.ndim))
        axes[-1], axes[-2] = axes[-2], axes[-1]
    axes = tuple(axes)
    inverse = tuple(np.argsort(axes))

    def backward(g):
        return (np.transpose(g, inverse),)

    return _result(np.transpose(a.data, axes), (a,), backward)


def reshape(a: Tensor, shape: Sequence[int]) -> Tensor:
    src = a.shape

    def backward(g):
        return (g.reshape(src),)

    return _result(a.data.reshape(shape), (a,), backward)


def embedding(weight: Tensor, ids: np.ndarray) -> Tensor:
    """ Gather rows of weight
    """
    ids = np.asarray(ids, dtype=np.int64)

    def backward(g):
        gw = np.zeros_like(weight.data)
        np.add.at(gw, ids, g)
        return (gw,)

    return _result(weight.data[ids], (weight,), backward)


#
# Reductions
#

def sum(a: Tensor, axis: Optional[int] = None, keepdims: bool = False) -> Tensor:  # noqa: A001
    src = a.shape

    def backward(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, src).copy(),)

    return _result(np.asarray(a.data.sum(axis=axis, keepdims=keepdims)), (a,), backward)


def mean(a: Tensor, axis: Optional[int] = None, keepdims: bool = False) -> Tensor:
    n = a.size if axis is None else a.shape[axis]
    return scale(sum(a, axis=axis, keepdims=keepdims), 1.0 / n)


#
# Normalization and attention
#

def rms_norm(x: Tensor, weight: Tensor, eps: float = 1e-6) -> Tensor:
    """ Root mean square normalization over the last axis
    """
    r = 1.0 / np.sqrt(np.mean(x.data * x.data, axis=-1, keepdims=True) + eps)
    n = x.data * r

    def backward(g):
        gw = _unbroadcast(g * n, weight.shape)
        gn = g * weight.data
        gx = r * (gn - n * np.mean(gn * n, axis=-1, keepdims=True))
        return gx, gw

    return _result(n * weight.data, (x, weight), backward)


def softmax(x: Tensor, mask: Optional[np.ndarray] = None) -> Tensor:
    """ Softmax over the last axis

        Entries where mask is False get probability zero,
        every row must keep at least one entry.
    """
    z = x.data
    if mask is not None:
        z = np.where(mask, z, -np.inf)
    z = z - np.max(z, axis=-1, keepdims=True)
    e = np.exp(z)
    y = e / np.sum(e, axis=-1, keepdims=True)

    def backward(g):
        return (y * (g - np.sum(g * y, axis=-1, keepdims=True)),)

    return _result(y, (x,), backward)


#
# Losses
#

def cross_entropy(logits: Tensor, targets: np.ndarray, weights: Optional[np.ndarray] = None) -> Tensor:
    """ Mean negative log likelihood of integer targets

        `weights` selects (or weights) the positions entering the mean.
    """
    targets = np.asarray(targets, dtype=np.int64)
    if logits.shape[:-1] != targets.shape:
        raise DimensionError("cross_entropy: logits %s and targets %s" % (logits.shape, targets.shape))
    if weights is None:
        weights = np.ones(targets.shape, dtype=logits.dtype)
    weights = np.asarray(weights, dtype=logits.dtype)
    total = weights.sum()
    if total <= 0:
        raise DegenerateInputError("cross_entropy: no position selected")

    z = logits.data - np.max(logits.data, axis=-1, keepdims=True)
    logz = np.log(np.sum(np.exp(z), axis=-1, keepdims=True))
    logp = z - logz
    picked = np.take_along_axis(logp, targets[..., None], axis=-1)[..., 0]
    loss = -(picked * weights).sum() / total

    def backward(g):
        p = np.exp(logp)
        np.put_along_axis(p, targets[..., None],
                          np.take_along_axis(p, targets[..., None], axis=-1) - 1.0, axis=-1)
        return (g * p * (weights / total)[..., None],)

    return _result(np.asarray(loss, dtype=logits.dtype), (logits,), backward)


def mse(pred: Tensor, target: TensorLike) -> Tensor:
    """ Mean squared error
    """
    target = as_tensor(target)
    if pred.shape != target.shape:
        raise DimensionError("mse: shapes %s and %s" % (pred.shape, target.shape))
    diff = pred.data - target.data
    n = diff.size

    def backward(g):
        gd = g * 2.0 * diff / n
        return gd, -gd

    return _result(np.asarray(np.mean(diff * diff), dtype=pred.dtype), (pred, target), backward)


#
# Non differentiable helpers
#

def cosine_similarity(a: TensorLike, b: TensorLike) -> float:
    """ dot(a,b) / (|a|.|b|) of two vectors
    """
    a = np.ravel(a.data if isinstance(a, Tensor) else np.asarray(a, dtype=np.float64))
    b = np.ravel(b.data if isinstance(b, Tensor) else np.asarray(b, dtype=np.float64))
    if a.shape != b.shape:
        raise DimensionError("cosine_similarity: lengths %s and %s" % (a.shape, b.shape))
    a = a.astype(np.float64)
    b = b.astype(np.float64)
    na = np.linalg.norm(a)
    nb = np.linalg.norm(b)
    if na == 0 or nb == 0:
        raise DegenerateInputError("cosine_similarity: zero-norm input")
    return float(np.clip(np.dot(a, b) / (na * nb), -1.0, 1.0))


def rowwise_cosine(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """ Cosine similarity of matching rows along the last axis
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape:
        raise DimensionError("rowwise_cosine: shapes %s and %s" % (x.shape, y.shape))
    nx = np.linalg.norm(x, axis=-1)
    ny = np.linalg.norm(y, axis=-1)
    if np.any(nx == 0) or np.any(ny == 0):
        raise DegenerateInputError("rowwise_cosine: zero-norm row")
    return np.clip(np.sum(x * y, axis=-1) / (nx * ny), -1.0, 1.0)


def zeros(shape: Sequence[int], requires_grad: bool = False, name: Optional[str] = None) -> Tensor:
    return Tensor(np.zeros(shape, dtype=default_dtype()), requires_grad=requires_grad, name=name)
