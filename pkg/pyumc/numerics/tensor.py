#
# Copyright 2026 py-umc authors
#
# This Source Code Form is subject to the terms of the Mozilla Public
# License, v. 2.0. If a copy of the MPL was not distributed with this
# file, You can obtain one at http://mozilla.org/MPL/2.0/.
#
""" Dense tensors and the reverse-mode gradient tape

    Operations executed while a GradientTape is active are recorded
    in execution order; `backward` replays them in reverse once.
    Tape and precision state are thread local so that independent model
    replicas may run on separate threads.
"""
import threading
import logging

import numpy as np

from contextlib import contextmanager
from typing import Callable, List, NamedTuple, Optional, Sequence, Tuple

from ..config import confservice
from ..exceptions import ContractError

LOGGER = logging.getLogger('UMCLOG')

_DTYPES = {
    'float32': np.float32,
    'float64': np.float64,
}

_local = threading.local()


def _resolve_dtype(name: str) -> np.dtype:
    try:
        return np.dtype(_DTYPES[name])
    except KeyError:
        raise ContractError("Unsupported precision '%s'" % name, locator='numerics:dtype')


def default_dtype() -> np.dtype:
    """ Return the floating point type used for new tensors
    """
    dtype = getattr(_local, 'dtype', None)
    if dtype is None:
        dtype = _resolve_dtype(confservice.get('numerics', 'dtype', fallback='float32'))
    return dtype


@contextmanager
def precision(name: str):
    """ Switch the default floating point type for the current thread
    """
    prev = getattr(_local, 'dtype', None)
    _local.dtype = _resolve_dtype(name)
    try:
        yield _local.dtype
    finally:
        _local.dtype = prev


class Tensor:
    """ Dense float array with an attached gradient slot
    """

    def __init__(self, data, requires_grad: bool = False, name: Optional[str] = None,
                 dtype: Optional[np.dtype] = None) -> None:
        self.data = np.array(data, dtype=dtype or default_dtype())
        self.grad: Optional[np.ndarray] = None
        self.requires_grad = requires_grad
        self.name = name
        # Set when produced by a recorded operation
        self._tape: Optional['GradientTape'] = None

    @classmethod
    def wrap(cls, array: np.ndarray) -> 'Tensor':
        """ Wrap an array without copy nor conversion
        """
        t = cls.__new__(cls)
        t.data = array
        t.grad = None
        t.requires_grad = False
        t.name = None
        t._tape = None
        return t

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    @property
    def dtype(self) -> np.dtype:
        return self.data.dtype

    @property
    def is_leaf(self) -> bool:
        return self._tape is None

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data)

    def detach(self) -> 'Tensor':
        return Tensor.wrap(self.data)

    def zero_grad(self) -> None:
        self.grad = None

    def accumulate_grad(self, grad: np.ndarray) -> None:
        if self.grad is None:
            self.grad = np.array(grad, dtype=self.data.dtype)
        else:
            self.grad += grad

    def __repr__(self) -> str:
        label = " name=%s" % self.name if self.name else ""
        return "Tensor(shape=%s, dtype=%s%s)" % (self.shape, self.dtype, label)

    # Operators are defined in ops, imported lazily to avoid cycles

    def __add__(self, other):
        from .ops import add
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        from .ops import sub
        return sub(self, other)

    def __rsub__(self, other):
        from .ops import sub
        return sub(other, self)

    def __mul__(self, other):
        from .ops import mul
        return mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        from .ops import scale
        return scale(self, -1.0)

    def __matmul__(self, other):
        from .ops import matmul
        return matmul(self, other)


BackwardFn = Callable[[np.ndarray], Sequence[Optional[np.ndarray]]]


class TapeRecord(NamedTuple):
    output: Tensor
    inputs: Tuple[Tensor, ...]
    backward: BackwardFn


def _tape_stack() -> List['GradientTape']:
    stack = getattr(_local, 'tapes', None)
    if stack is None:
        stack = _local.tapes = []
    return stack


def active_tape() -> Optional['GradientTape']:
    stack = _tape_stack()
    return stack[-1] if stack else None


class GradientTape:
    """ Ordered record of executed differentiable operations
    """

    def __init__(self) -> None:
        self.records: List[TapeRecord] = []
        self.replayed = False

    def __enter__(self) -> 'GradientTape':
        _tape_stack().append(self)
        return self

    def __exit__(self, *exc) -> None:
        _tape_stack().remove(self)

    def __len__(self) -> int:
        return len(self.records)

    def record(self, output: Tensor, inputs: Tuple[Tensor, ...], backward: BackwardFn) -> None:
        output._tape = self
        self.records.append(TapeRecord(output, inputs, backward))

    def backward(self, loss: Tensor) -> None:
        """ Populate the gradient of every leaf tensor reachable from loss
        """
        if loss.data.size != 1 or loss.ndim > 1:
            raise ContractError("backward requires a scalar loss, got shape %s" % (loss.shape,))
        if loss._tape is not self:
            raise ContractError("Loss was not produced under this tape")
        if self.replayed:
            raise ContractError("Tape already replayed")
        self.replayed = True

        adjoints = { id(loss): np.ones_like(loss.data) }
        leaves = {}
        for rec in reversed(self.records):
            g = adjoints.pop(id(rec.output), None)
            if g is None:
                continue
            grads = rec.backward(g)
            for inp, gi in zip(rec.inputs, grads):
                if gi is None or not inp.requires_grad:
                    continue
                key = id(inp)
                if key in adjoints:
                    adjoints[key] = adjoints[key] + gi
                else:
                    adjoints[key] = gi
                if inp.is_leaf:
                    leaves[key] = inp

        # Accumulate in first-use order so that runs are bit reproducible
        for key, leaf in leaves.items():
            leaf.accumulate_grad(adjoints[key])

        # Release graph references
        self.records.clear()


def backward(loss: Tensor) -> None:
    """ Back-propagate from a scalar loss produced under an active tape
    """
    if loss.data.size != 1 or loss.ndim > 1:
        raise ContractError("backward requires a scalar loss, got shape %s" % (loss.shape,))
    if loss._tape is None:
        raise ContractError("Loss was not produced under an active tape")
    loss._tape.backward(loss)
