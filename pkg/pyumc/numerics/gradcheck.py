#
# Copyright 2026 py-umc authors
#
# This Source Code Form is subject to the terms of the Mozilla Public
# License, v. 2.0. If a copy of the MPL was not distributed with this
# file, You can obtain one at http://mozilla.org/MPL/2.0/.
#
""" Central finite difference oracle for analytic gradients
"""
import numpy as np

from typing import Callable, Dict, Sequence

from .tensor import Tensor, GradientTape


def analytic_gradients(fn: Callable[[], Tensor], tensors: Sequence[Tensor]) -> Dict[int, np.ndarray]:
    """ Gradients of the scalar fn() with respect to tensors
    """
    for t in tensors:
        t.zero_grad()
    with GradientTape() as tape:
        loss = fn()
    tape.backward(loss)
    return { id(t): (t.grad if t.grad is not None else np.zeros_like(t.data)).copy() for t in tensors }


def numerical_gradient(fn: Callable[[], Tensor], tensor: Tensor, eps: float = 1e-6) -> np.ndarray:
    """ Central differences of fn() with respect to every entry of tensor
    """
    grad = np.zeros_like(tensor.data, dtype=np.float64)
    flat = tensor.data.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + eps
        fp = float(fn().data)
        flat[i] = orig - eps
        fm = float(fn().data)
        flat[i] = orig
        grad.reshape(-1)[i] = (fp - fm) / (2 * eps)
    return grad


def relative_error(a: np.ndarray, b: np.ndarray) -> float:
    """ ||a-b|| / max(||a||, ||b||)
    """
    num = np.linalg.norm(np.ravel(a) - np.ravel(b))
    den = max(np.linalg.norm(a), np.linalg.norm(b), 1e-30)
    return float(num / den)


def gradient_errors(fn: Callable[[], Tensor], tensors: Sequence[Tensor], eps: float = 1e-6) -> Sequence[float]:
    """ Relative error between analytic and numerical gradient for each tensor
    """
    analytic = analytic_gradients(fn, tensors)
    return [relative_error(analytic[id(t)], numerical_gradient(fn, t, eps)) for t in tensors]
