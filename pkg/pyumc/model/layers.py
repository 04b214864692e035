#
# Copyright 2026 py-umc authors
#
# This Source Code Form is subject to the terms of the Mozilla Public
# License, v. 2.0. If a copy of the MPL was not distributed with this
# file, You can obtain one at http://mozilla.org/MPL/2.0/.
#
""" Transformer building blocks

    Weights follow the `y = x W^T` convention: W_g, W_u are [dm x d],
    W_d is [d x dm] and neuron i owns row i of W_g, W_u and column i of W_d.
"""
import math

import numpy as np

from typing import Iterator, List, Optional, Sequence, Tuple

from .. import numerics as nx
from ..numerics import Tensor
from ..exceptions import ContractError, DimensionError
from .probe import ForwardProbe

NamedParameter = Tuple[str, Tensor]


def init_weight(rng: np.random.Generator, out_dim: int, in_dim: int, std: Optional[float] = None) -> Tensor:
    std = std if std is not None else 1.0 / math.sqrt(in_dim)
    return Tensor(rng.standard_normal((out_dim, in_dim)) * std, requires_grad=True)


def _take(t: Tensor, keep: np.ndarray, axis: int) -> Tensor:
    return Tensor(np.take(t.data, keep, axis=axis), requires_grad=t.requires_grad, dtype=t.dtype)


def _keep_indices(width: int, remove: Sequence[int], what: str) -> np.ndarray:
    remove = list(remove)
    if len(set(remove)) != len(remove):
        raise ContractError("Duplicate %s indices in removal" % what)
    if any(i < 0 or i >= width for i in remove):
        raise ContractError("%s index out of range [0, %d)" % (what, width))
    mask = np.ones(width, dtype=bool)
    mask[remove] = False
    return np.flatnonzero(mask)


class MlpLayer:
    """ Gate-Up-Down MLP: (SiLU(x W_g^T) * x W_u^T) W_d^T
    """
    kind = 'dense'

    def __init__(self, wg: Tensor, wu: Tensor, wd: Tensor) -> None:
        if not (wg.shape == wu.shape and wd.shape == wg.shape[::-1]):
            raise DimensionError("MLP shapes W_g %s, W_u %s, W_d %s" % (wg.shape, wu.shape, wd.shape))
        self.wg = wg
        self.wu = wu
        self.wd = wd

    @classmethod
    def init(cls, rng: np.random.Generator, d: int, dm: int) -> 'MlpLayer':
        return cls(init_weight(rng, dm, d), init_weight(rng, dm, d), init_weight(rng, d, dm))

    @property
    def width(self) -> int:
        return self.wg.shape[0]

    def hidden(self, x: Tensor) -> Tensor:
        g = nx.matmul(x, nx.transpose(self.wg))
        u = nx.matmul(x, nx.transpose(self.wu))
        return nx.mul(nx.silu(g), u)

    def __call__(self, x: Tensor, probe: Optional[ForwardProbe] = None,
                 component: str = '', layer: int = -1, mode: Optional[str] = None) -> Tensor:
        h = self.hidden(x)
        if probe is not None:
            probe.mlp_hidden(component, layer, h.data)
        return nx.matmul(h, nx.transpose(self.wd))

    def parameters(self, prefix: str) -> Iterator[NamedParameter]:
        yield prefix + 'mlp.wg', self.wg
        yield prefix + 'mlp.wu', self.wu
        yield prefix + 'mlp.wd', self.wd

    def down_column_norms(self) -> np.ndarray:
        """ ||W_{d,i}||_2 for every neuron i
        """
        return np.linalg.norm(self.wd.data.astype(np.float64), axis=0)

    def remove_neurons(self, indices: Sequence[int]) -> 'MlpLayer':
        """ Delete row i of W_g, W_u and column i of W_d for every index
        """
        keep = _keep_indices(self.width, indices, 'neuron')
        return MlpLayer(_take(self.wg, keep, 0), _take(self.wu, keep, 0), _take(self.wd, keep, 1))


class Attention:
    """ Multi-head attention, self or cross
    """

    def __init__(self, wq: Tensor, wk: Tensor, wv: Tensor, wo: Tensor, head_dim: int,
                 causal: bool = False, cross: bool = False) -> None:
        self.wq = wq
        self.wk = wk
        self.wv = wv
        self.wo = wo
        self.head_dim = head_dim
        self.causal = causal
        self.cross = cross

    @classmethod
    def init(cls, rng: np.random.Generator, d: int, n_heads: int, causal: bool = False,
             cross: bool = False) -> 'Attention':
        hd = d // n_heads
        inner = n_heads * hd
        return cls(init_weight(rng, inner, d), init_weight(rng, inner, d), init_weight(rng, inner, d),
                   init_weight(rng, d, inner), hd, causal=causal, cross=cross)

    @property
    def n_heads(self) -> int:
        return self.wq.shape[0] // self.head_dim

    def __call__(self, x: Tensor, context: Optional[Tensor] = None, probe: Optional[ForwardProbe] = None,
                 component: str = '', layer: int = -1) -> Tensor:
        src = context if self.cross else x
        B, T, _ = x.shape
        S = src.shape[1]
        H, hd = self.n_heads, self.head_dim

        def split(t: Tensor, n: int) -> Tensor:
            return nx.transpose(nx.reshape(t, (B, n, H, hd)), (0, 2, 1, 3))

        q = split(nx.matmul(x, nx.transpose(self.wq)), T)
        k = split(nx.matmul(src, nx.transpose(self.wk)), S)
        v = split(nx.matmul(src, nx.transpose(self.wv)), S)

        scores = nx.scale(nx.matmul(q, nx.transpose(k)), 1.0 / math.sqrt(hd))
        mask = np.tril(np.ones((T, S), dtype=bool)) if self.causal else None
        a = nx.matmul(nx.softmax(scores, mask), v)
        if probe is not None and not self.cross:
            probe.heads(component, layer, a.data)
        merged = nx.reshape(nx.transpose(a, (0, 2, 1, 3)), (B, T, H * hd))
        return nx.matmul(merged, nx.transpose(self.wo))

    def parameters(self, prefix: str) -> Iterator[NamedParameter]:
        yield prefix + 'wq', self.wq
        yield prefix + 'wk', self.wk
        yield prefix + 'wv', self.wv
        yield prefix + 'wo', self.wo

    def output_slice_norms(self) -> np.ndarray:
        """ ||W_{O,h}||_F for every head h
        """
        wo = self.wo.data.astype(np.float64)
        return np.array([np.linalg.norm(wo[:, h * self.head_dim:(h + 1) * self.head_dim])
                         for h in range(self.n_heads)])

    def remove_heads(self, heads: Sequence[int]) -> 'Attention':
        """ Delete Q/K/V rows and O columns of the given heads
        """
        keep_heads = _keep_indices(self.n_heads, heads, 'head')
        hd = self.head_dim
        keep = np.concatenate([np.arange(h * hd, (h + 1) * hd) for h in keep_heads]) \
            if len(keep_heads) else np.zeros(0, dtype=np.int64)
        return Attention(_take(self.wq, keep, 0), _take(self.wk, keep, 0), _take(self.wv, keep, 0),
                         _take(self.wo, keep, 1), hd, causal=self.causal, cross=self.cross)


def _norm_weight(d: int) -> Tensor:
    return Tensor(np.ones(d), requires_grad=True)


class TransformerBlock:
    """ Pre-norm residual block

        y = x + Attn(norm(x)); [y = y + XAttn(norm(y), ctx)]; y' = y + MLP(norm(y))
        Sublayers set to None have been removed by depth surgery.
    """

    def __init__(self, index: int, attn: Optional[Attention], mlp, norm_attn: Optional[Tensor],
                 norm_mlp: Optional[Tensor], xattn: Optional[Attention] = None,
                 norm_xattn: Optional[Tensor] = None, eps: float = 1e-6) -> None:
        self.index = index
        self.attn = attn
        self.mlp = mlp
        self.norm_attn = norm_attn
        self.norm_mlp = norm_mlp
        self.xattn = xattn
        self.norm_xattn = norm_xattn
        self.eps = eps

    @classmethod
    def init(cls, rng: np.random.Generator, index: int, d: int, dm: int, n_heads: int,
             causal: bool, cross: bool, eps: float) -> 'TransformerBlock':
        attn = Attention.init(rng, d, n_heads, causal=causal)
        xattn = Attention.init(rng, d, n_heads, cross=True) if cross else None
        mlp = MlpLayer.init(rng, d, dm)
        return cls(index, attn, mlp, _norm_weight(d), _norm_weight(d),
                   xattn=xattn, norm_xattn=_norm_weight(d) if cross else None, eps=eps)

    def __call__(self, x: Tensor, component: str, context: Optional[Tensor] = None,
                 probe: Optional[ForwardProbe] = None, mode: Optional[str] = None) -> Tensor:
        layer = self.index
        y = x
        if self.attn is not None:
            h = y
            y = nx.add(h, self.attn(nx.rms_norm(h, self.norm_attn, self.eps),
                                    probe=probe, component=component, layer=layer))
            if probe is not None:
                probe.sublayer(component, layer, 'attn', h.data, y.data)
        if self.xattn is not None:
            if context is None:
                raise ContractError("Cross-attention block requires a context", locator='%s:%d' % (component, layer))
            h = y
            y = nx.add(h, self.xattn(nx.rms_norm(h, self.norm_xattn, self.eps), context=context))
            if probe is not None:
                probe.sublayer(component, layer, 'xattn', h.data, y.data)
        if self.mlp is not None:
            h = y
            y = nx.add(h, self.mlp(nx.rms_norm(h, self.norm_mlp, self.eps),
                                   probe=probe, component=component, layer=layer, mode=mode))
            if probe is not None:
                probe.sublayer(component, layer, 'mlp', h.data, y.data)
        if probe is not None:
            probe.block(component, layer, x.data, y.data)
        return y

    def parameters(self, prefix: str) -> Iterator[NamedParameter]:
        if self.attn is not None:
            yield prefix + 'norm_attn', self.norm_attn
            yield from self.attn.parameters(prefix + 'attn.')
        if self.xattn is not None:
            yield prefix + 'norm_xattn', self.norm_xattn
            yield from self.xattn.parameters(prefix + 'xattn.')
        if self.mlp is not None:
            yield prefix + 'norm_mlp', self.norm_mlp
            yield from self.mlp.parameters(prefix)

    def describe(self) -> dict:
        return {
            'index': self.index,
            'attn': self.attn.n_heads if self.attn is not None else None,
            'xattn': self.xattn.n_heads if self.xattn is not None else None,
            'mlp': self.mlp.kind if self.mlp is not None else None,
            'width': self.mlp.width if self.mlp is not None else None,
        }


def stack_parameters(blocks: List[TransformerBlock], prefix: str) -> Iterator[NamedParameter]:
    for b in blocks:
        yield from b.parameters('%sblocks.%d.' % (prefix, b.index))
