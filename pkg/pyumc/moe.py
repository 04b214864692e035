#
# Copyright 2026 py-umc authors
#
# This Source Code Form is subject to the terms of the Mozilla Public
# License, v. 2.0. If a copy of the MPL was not distributed with this
# file, You can obtain one at http://mozilla.org/MPL/2.0/.
#
""" Dense to Mixture-of-Experts conversion

    The hidden neurons of a dense MLP are split into a shared expert
    (always active) and routed experts. A zero initialized linear router
    scores the routed experts per token; a selected expert j is weighted
    by G_j = 1 + r_j, so that at initialization every gate equals one and
    the dense-equivalent mode reproduces the dense layer.
"""
import logging

import numpy as np

from dataclasses import dataclass, asdict
from typing import Dict, Iterator, List, Optional, Sequence, Tuple

from . import numerics as nx
from .numerics import Tensor
from .exceptions import ConfigError, ContractError, InputError
from .importance import ImportanceReport, rank
from .model import ForwardProbe, MlpLayer, UnifiedToyModel, UNDERSTANDING, CONDITIONING
from .model.layers import NamedParameter

LOGGER = logging.getLogger('UMCLOG')

STANDARD_EXPERT_COUNTS = (16, 32, 64)
SETUPS = ('gen', 'und_gen')
SPARSE = 'sparse'
DENSE = 'dense'

# Share of experts that are shared experts
SHARED_FRACTION = 16


@dataclass
class ExpertPartition:
    component: str
    layer: int
    n_experts: int
    n_shared: int
    expert_size: int
    shared: List[int]
    routed: List[List[int]]
    source: str = ''

    @property
    def n_routed(self) -> int:
        return len(self.routed)

    @property
    def width(self) -> int:
        return len(self.shared) + sum(len(e) for e in self.routed)

    def validate(self, width: Optional[int] = None) -> 'ExpertPartition':
        width = width if width is not None else self.width
        members = list(self.shared) + [i for e in self.routed for i in e]
        if len(members) != len(set(members)):
            raise ContractError("Expert sets overlap in %s:%d" % (self.component, self.layer))
        if sorted(members) != list(range(width)):
            raise ContractError("Expert sets do not cover [0, %d) in %s:%d" % (width, self.component, self.layer))
        if len(self.shared) != self.n_shared * self.expert_size:
            raise ContractError("Shared expert size mismatch in %s:%d" % (self.component, self.layer))
        if any(len(e) != self.expert_size for e in self.routed):
            raise ContractError("Routed expert size mismatch in %s:%d" % (self.component, self.layer))
        return self

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> 'ExpertPartition':
        return cls(**data)


def snake_assign(order: Sequence[int], n_experts: int) -> List[List[int]]:
    """ Deal items to experts forward then backward, repeatedly
    """
    experts = [[] for _ in range(n_experts)]
    for j, item in enumerate(order):
        rnd, pos = divmod(j, n_experts)
        experts[pos if rnd % 2 == 0 else n_experts - 1 - pos].append(item)
    return experts


def partition_experts(report: ImportanceReport, n_experts: int, shared: bool = True,
                      n_shared: Optional[int] = None) -> ExpertPartition:
    """ Shared expert from the top scoring neurons, the rest snake-assigned

        `n_shared` defaults to n_experts / 16 (at least one), or zero
        when `shared` is False.
    """
    dm = report.width
    if n_experts < 1 or dm % n_experts:
        raise ConfigError("MLP width %d is not divisible by %d experts" % (dm, n_experts),
                          locator='%s:%d' % (report.component, report.layer))
    if n_experts not in STANDARD_EXPERT_COUNTS:
        LOGGER.warning("Non standard expert count %d", n_experts)
    if n_shared is None:
        n_shared = max(1, n_experts // SHARED_FRACTION) if shared else 0
    if not (0 <= n_shared < n_experts):
        raise ConfigError("Invalid shared expert count %d for %d experts" % (n_shared, n_experts))
    size = dm // n_experts
    order = [int(i) for i in rank(report.scores)]
    cut = n_shared * size
    routed = snake_assign(order[cut:], n_experts - n_shared)
    part = ExpertPartition(component=report.component, layer=report.layer, n_experts=n_experts,
                           n_shared=n_shared, expert_size=size,
                           shared=sorted(order[:cut]),
                           routed=[sorted(e) for e in routed],
                           source=report.provenance_id)
    return part.validate(dm)


def default_k(n_experts: int, n_shared: int, ratio: float = 0.5) -> int:
    """ Routed experts per token so that (n_shared + k) / E = ratio
    """
    return int(round(ratio * n_experts)) - n_shared


class MoELayer:
    """ Shared expert plus top-k routed experts
    """
    kind = 'moe'

    def __init__(self, shared_idx: np.ndarray, routed_idx: np.ndarray,
                 wg_s: Tensor, wu_s: Tensor, wd_s: Tensor,
                 wg_r: Tensor, wu_r: Tensor, wd_r: Tensor,
                 router_w: Tensor, router_b: Tensor, k: int) -> None:
        self.shared_idx = np.asarray(shared_idx, dtype=np.int64)
        # [n_routed x expert_size]
        self.routed_idx = np.asarray(routed_idx, dtype=np.int64)
        self.wg_s, self.wu_s, self.wd_s = wg_s, wu_s, wd_s
        # Stacked routed slices: W_g, W_u [R x es x d], W_d [R x d x es]
        self.wg_r, self.wu_r, self.wd_r = wg_r, wu_r, wd_r
        self.router_w = router_w
        self.router_b = router_b
        if not (1 <= k <= self.n_routed):
            raise ConfigError("k=%d out of [1, %d]" % (k, self.n_routed))
        self.k = k

    @classmethod
    def from_dense(cls, mlp: MlpLayer, partition: ExpertPartition, k: int) -> 'MoELayer':
        partition.validate(mlp.width)
        shared = np.asarray(partition.shared, dtype=np.int64)
        routed = np.asarray(partition.routed, dtype=np.int64)
        wg, wu, wd = mlp.wg.data, mlp.wu.data, mlp.wd.data
        d = wd.shape[0]

        def param(a):
            return Tensor(a.copy(), requires_grad=True, dtype=a.dtype)

        return cls(shared, routed,
                   param(wg[shared]), param(wu[shared]), param(wd[:, shared]),
                   param(wg[routed]), param(wu[routed]), param(np.stack([wd[:, e] for e in routed])),
                   param(np.zeros((len(routed), d), dtype=wg.dtype)),
                   param(np.zeros(len(routed), dtype=wg.dtype)), k)

    @classmethod
    def skeleton(cls, desc: dict, d: int) -> 'MoELayer':
        """ Zero filled layer with the described expert layout
        """
        shared = np.asarray(desc['shared'], dtype=np.int64)
        routed = np.asarray(desc['routed'], dtype=np.int64).reshape(len(desc['routed']), -1)
        R, es = routed.shape
        ns = shared.shape[0]

        def zeros(*shape):
            return Tensor(np.zeros(shape), requires_grad=True)

        return cls(shared, routed, zeros(ns, d), zeros(ns, d), zeros(d, ns),
                   zeros(R, es, d), zeros(R, es, d), zeros(R, d, es),
                   zeros(R, d), zeros(R), desc['k'])

    @property
    def n_routed(self) -> int:
        return self.routed_idx.shape[0]

    @property
    def expert_size(self) -> int:
        return self.routed_idx.shape[1]

    @property
    def n_shared(self) -> int:
        return self.shared_idx.shape[0] // self.expert_size

    @property
    def n_experts(self) -> int:
        return self.n_shared + self.n_routed

    @property
    def width(self) -> int:
        return self.shared_idx.shape[0] + self.routed_idx.size

    @property
    def d_model(self) -> int:
        return self.router_w.shape[1]

    def describe(self) -> dict:
        return {
            'shared': self.shared_idx.tolist(),
            'routed': self.routed_idx.tolist(),
            'k': self.k,
        }

    def parameters(self, prefix: str) -> Iterator[NamedParameter]:
        if self.shared_idx.size:
            yield prefix + 'moe.shared.wg', self.wg_s
            yield prefix + 'moe.shared.wu', self.wu_s
            yield prefix + 'moe.shared.wd', self.wd_s
        yield prefix + 'moe.routed.wg', self.wg_r
        yield prefix + 'moe.routed.wu', self.wu_r
        yield prefix + 'moe.routed.wd', self.wd_r
        yield prefix + 'moe.router.w', self.router_w
        yield prefix + 'moe.router.b', self.router_b

    def expert_parameter_count(self) -> int:
        return 3 * self.d_model * self.width

    def activated_expert_parameter_count(self, mode: Optional[str] = None) -> int:
        if (mode or SPARSE) == DENSE:
            return self.expert_parameter_count()
        return 3 * self.d_model * self.expert_size * (self.n_shared + self.k)

    #
    # Forward
    #

    def router_scores(self, x: Tensor) -> Tensor:
        """ r = x W^T + b, one score per routed expert
        """
        return nx.add(nx.matmul(x, nx.transpose(self.router_w)), self.router_b)

    def select(self, r: np.ndarray) -> np.ndarray:
        """ 0/1 mask of the top-k experts per token, ties by lower expert index
        """
        order = np.argsort(-r, axis=-1, kind='stable')[..., :self.k]
        mask = np.zeros_like(r)
        np.put_along_axis(mask, order, 1.0, axis=-1)
        return mask

    def shared_output(self, x: Tensor) -> Tuple[Optional[Tensor], Optional[Tensor]]:
        if not self.shared_idx.size:
            return None, None
        h = nx.mul(nx.silu(nx.matmul(x, nx.transpose(self.wg_s))), nx.matmul(x, nx.transpose(self.wu_s)))
        return h, nx.matmul(h, nx.transpose(self.wd_s))

    def expert_outputs(self, x: Tensor) -> Tuple[Tensor, Tensor]:
        """ Hidden [R x N x es] and output [R x N x d] of every routed expert
        """
        xe = nx.reshape(x, (1,) + x.shape)
        h = nx.mul(nx.silu(nx.matmul(xe, nx.transpose(self.wg_r))), nx.matmul(xe, nx.transpose(self.wu_r)))
        return h, nx.matmul(h, nx.transpose(self.wd_r))

    def __call__(self, x: Tensor, probe: Optional[ForwardProbe] = None, component: str = '', layer: int = -1,
                 mode: Optional[str] = None) -> Tensor:
        mode = mode or SPARSE
        lead = x.shape[:-1]
        d = x.shape[-1]
        xf = nx.reshape(x, (-1, d))
        N = xf.shape[0]

        hs, ys = self.shared_output(xf)
        hr, yr = self.expert_outputs(xf)
        if mode == DENSE:
            routed = nx.sum(yr, axis=0)
        elif mode == SPARSE:
            r = self.router_scores(xf)
            mask = self.select(r.data)
            if probe is not None:
                probe.router(component, layer, r, mask)
            gates = nx.mul(nx.add(r, 1.0), mask)
            gates = nx.reshape(nx.transpose(gates), (self.n_routed, N, 1))
            routed = nx.sum(nx.mul(yr, gates), axis=0)
        else:
            raise InputError("Unknown MoE mode '%s'" % mode)

        y = routed if ys is None else nx.add(ys, routed)

        if probe is not None and len(lead) == 2:
            h = np.zeros((N, self.width), dtype=hr.dtype)
            if hs is not None:
                h[:, self.shared_idx] = hs.data
            for j in range(self.n_routed):
                h[:, self.routed_idx[j]] = hr.data[j]
            probe.mlp_hidden(component, layer, h.reshape(lead + (self.width,)))
        return nx.reshape(y, lead + (d,))

    #
    # Weights
    #

    def _order(self) -> np.ndarray:
        return np.concatenate([self.shared_idx, self.routed_idx.reshape(-1)])

    def to_dense(self) -> MlpLayer:
        """ Reassemble the dense MLP, slices put back in original neuron order
        """
        order = self._order()
        d = self.d_model
        dm = self.width
        wg = np.empty((dm, d), dtype=self.wg_r.dtype)
        wu = np.empty((dm, d), dtype=self.wu_r.dtype)
        wd = np.empty((d, dm), dtype=self.wd_r.dtype)
        wg[order] = np.concatenate([self.wg_s.data, self.wg_r.data.reshape(-1, d)])
        wu[order] = np.concatenate([self.wu_s.data, self.wu_r.data.reshape(-1, d)])
        wd[:, order] = np.concatenate([self.wd_s.data,
                                       self.wd_r.data.transpose(1, 0, 2).reshape(d, -1)], axis=1)
        return MlpLayer(Tensor(wg, requires_grad=True, dtype=wg.dtype),
                        Tensor(wu, requires_grad=True, dtype=wu.dtype),
                        Tensor(wd, requires_grad=True, dtype=wd.dtype))

    def down_column_norms(self) -> np.ndarray:
        norms = np.empty(self.width)
        norms[self.shared_idx] = np.linalg.norm(self.wd_s.data.astype(np.float64), axis=0)
        routed = np.linalg.norm(self.wd_r.data.astype(np.float64), axis=1)
        for j in range(self.n_routed):
            norms[self.routed_idx[j]] = routed[j]
        return norms

    def remove_neurons(self, indices):
        raise ContractError("Width pruning of MoE layers is not supported")


def moe_forward(layer: MoELayer, x: Tensor, mode: Optional[str] = None) -> Tensor:
    """ MoE(x) = f_S(x) + sum over selected j of G_j f_Rj(x)
    """
    return layer(x, mode=mode)


def serving_modes(setup: str, dense_equivalent: bool = False) -> Dict[str, str]:
    """ MoE serving mode per (component, purpose)
    """
    if setup not in SETUPS:
        raise ConfigError("Unknown MoE setup '%s'" % setup, locator='moe:setup')
    sparse = DENSE if dense_equivalent else SPARSE
    modes = { 'gen:generation': sparse }
    if setup == 'und_gen':
        # Understanding stays fully activated, conditioning runs sparse
        modes['und:%s' % UNDERSTANDING] = DENSE
        modes['und:%s' % CONDITIONING] = sparse
    return modes


def setup_components(setup: str) -> Tuple[str, ...]:
    return ('gen',) if setup == 'gen' else ('und', 'gen')


def default_excluded(model: UnifiedToyModel, components: Sequence[str]) -> List[Tuple[str, int]]:
    """ First and last live layers of every converted component
    """
    excluded = set()
    for component in components:
        layers = [b.index for b in model.blocks(component)]
        if layers:
            excluded.update({ (component, layers[0]), (component, layers[-1]) })
    return sorted(excluded)


@dataclass
class ConvertConfig:
    n_experts: int = 16
    k: Optional[int] = None
    ratio: float = 0.5
    setup: str = 'gen'
    excluded: Optional[List[Tuple[str, int]]] = None
    dense_equivalent: bool = False


def convert(model: UnifiedToyModel, partitions: Sequence[ExpertPartition],
            config: Optional[ConvertConfig] = None) -> UnifiedToyModel:
    """ Replace every covered dense MLP with an MoE layer, on a copy
    """
    config = config or ConvertConfig()
    components = setup_components(config.setup)
    modes = serving_modes(config.setup, config.dense_equivalent)
    excluded = { (c, int(l)) for c, l in (config.excluded if config.excluded is not None
                                          else default_excluded(model, components)) }
    by_layer = { (p.component, p.layer): p for p in partitions }

    converted = model.copy()
    count = 0
    for component in components:
        for b in converted.blocks(component):
            key = (component, b.index)
            if b.mlp is None or key in excluded:
                continue
            if b.mlp.kind != 'dense':
                raise ContractError("Layer %s:%d is already converted" % key)
            part = by_layer.get(key)
            if part is None:
                raise ContractError("No expert partition for layer %s:%d" % key)
            if part.n_experts != config.n_experts:
                raise ContractError("Partition of %s:%d has %d experts, %d requested" % (
                                    component, b.index, part.n_experts, config.n_experts))
            k = config.k if config.k is not None else default_k(part.n_experts, part.n_shared, config.ratio)
            b.mlp = MoELayer.from_dense(b.mlp, part, k)
            count += 1
    converted.moe_modes = modes
    converted.moe_setup = config.setup
    converted.partitions = [p.to_dict() for p in partitions if (p.component, p.layer) not in excluded]
    LOGGER.info("Converted %d MLP layers to MoE (E=%d, setup=%s)", count, config.n_experts, config.setup)
    return converted


def deconvert(model: UnifiedToyModel) -> UnifiedToyModel:
    """ Dense copy of a converted model
    """
    dense = model.copy()
    for component in ('und', 'gen'):
        for b in dense.blocks(component):
            if b.mlp is not None and b.mlp.kind == 'moe':
                b.mlp = b.mlp.to_dense()
    dense.moe_modes = {}
    dense.moe_setup = None
    return dense


def moe_layers(model: UnifiedToyModel, component: Optional[str] = None) -> List[Tuple[str, int, MoELayer]]:
    out = []
    for comp in ('und', 'gen') if component is None else (component,):
        for b in model.blocks(comp):
            if b.mlp is not None and b.mlp.kind == 'moe':
                out.append((comp, b.index, b.mlp))
    return out


def moe_activated_fraction(model: UnifiedToyModel, component: str = 'gen') -> Optional[float]:
    """ Fraction of expert parameters active per token in sparse mode
    """
    layers = moe_layers(model, component)
    if not layers:
        return None
    total = sum(m.expert_parameter_count() for _, _, m in layers)
    active = sum(m.activated_expert_parameter_count(SPARSE) for _, _, m in layers)
    return active / total


class RouterProbe(ForwardProbe):
    """ Collect router scores and selections for the load-balancing loss
    """

    def __init__(self) -> None:
        self.records: List[Tuple[Tensor, np.ndarray]] = []

    def router(self, component, layer, scores, selected):
        self.records.append((scores, selected))


def load_balance_loss(probe: RouterProbe) -> Optional[Tensor]:
    """ Mean over layers of n_routed * sum_j f_j * P_j

        f_j is the fraction of tokens routed to expert j and P_j the mean
        softmax probability of expert j.
    """
    if not probe.records:
        return None
    total = None
    for scores, selected in probe.records:
        R = scores.shape[-1]
        f = selected.mean(axis=0)
        p = nx.mean(nx.softmax(scores), axis=0)
        term = nx.scale(nx.sum(nx.mul(p, f)), float(R))
        total = term if total is None else nx.add(total, term)
    return nx.scale(total, 1.0 / len(probe.records))
