#
# Copyright 2026 py-umc authors
#
# This Source Code Form is subject to the terms of the Mozilla Public
# License, v. 2.0. If a copy of the MPL was not distributed with this
# file, You can obtain one at http://mozilla.org/MPL/2.0/.
#
""" Training-free structured compression

    Plans are declarative lists of removals. Applying a plan copies the
    model and excises the selected blocks, sublayers, neurons or heads;
    every surviving weight is copied unchanged.
"""
import json
import logging

import numpy as np

from collections import defaultdict
from dataclasses import dataclass, field, asdict
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

from .exceptions import ContractError, InputError
from .importance import ImportanceReport, LayerScore, head_scores, rank
from .model import UnifiedToyModel
from .trace import ActivationTrace

LOGGER = logging.getLogger('UMCLOG')

PLAN_KINDS = ('depth', 'width', 'heads')

# Depth removal targets per granularity
DEPTH_TARGETS = {
    'block': 'block',
    'mlp': 'mlp',
    'attn': 'attn',
}


@dataclass(frozen=True)
class Removal:
    component: str
    layer: int
    # 'block' | 'mlp' | 'attn' | 'neuron' | 'head'
    kind: str
    index: Optional[int] = None


@dataclass
class PruningPlan:
    kind: str
    removals: List[Removal] = field(default_factory=list)
    granularity: Optional[str] = None
    ratio: Optional[float] = None
    protected: List[Tuple[str, int]] = field(default_factory=list)
    provenance: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.kind not in PLAN_KINDS:
            raise InputError("Unknown plan kind '%s'" % self.kind)
        self.protected = [tuple(p) for p in self.protected]

    def __len__(self) -> int:
        return len(self.removals)

    def by_layer(self) -> Dict[Tuple[str, int], List[Removal]]:
        groups = defaultdict(list)
        for r in self.removals:
            groups[(r.component, r.layer)].append(r)
        return dict(groups)

    def to_dict(self) -> dict:
        return {
            'kind': self.kind,
            'granularity': self.granularity,
            'ratio': self.ratio,
            'protected': [list(p) for p in self.protected],
            'provenance': dict(self.provenance),
            'removals': [asdict(r) for r in self.removals],
        }

    @classmethod
    def from_dict(cls, data: dict) -> 'PruningPlan':
        return cls(kind=data['kind'],
                   removals=[Removal(**r) for r in data['removals']],
                   granularity=data.get('granularity'),
                   ratio=data.get('ratio'),
                   protected=data.get('protected', []),
                   provenance=data.get('provenance', {}))

    def to_jsonl(self) -> str:
        """ One JSON record per removal
        """
        lines = []
        for r in self.removals:
            rec = dict(asdict(r), plan=self.kind)
            lines.append(json.dumps(rec, sort_keys=True))
        return ''.join(line + '\n' for line in lines)

    @classmethod
    def from_jsonl(cls, text: str, kind: Optional[str] = None) -> 'PruningPlan':
        removals = []
        for line in text.splitlines():
            if not line.strip():
                continue
            rec = json.loads(line)
            rec_kind = rec.pop('plan')
            if kind is not None and rec_kind != kind:
                raise ContractError("Mixed plan kinds '%s' and '%s'" % (kind, rec_kind))
            kind = rec_kind
            removals.append(Removal(**rec))
        if kind is None:
            raise InputError("Cannot infer the kind of an empty plan")
        return cls(kind=kind, removals=removals)


def _protected_set(protected: Optional[Iterable[Sequence]]) -> set:
    return { (p[0], int(p[1])) for p in (protected or ()) }


def default_protected(model: UnifiedToyModel, component: str) -> List[Tuple[str, int]]:
    """ First and last live layers of the generation stack
    """
    if component != 'gen':
        return []
    layers = [b.index for b in model.blocks('gen')]
    return sorted({ ('gen', layers[0]), ('gen', layers[-1]) }) if layers else []


#
# Planning
#

def plan_depth(scores: Sequence[LayerScore], k: int,
               protected: Optional[Iterable[Sequence]] = None) -> PruningPlan:
    """ Remove the k (sub)layers with the highest S_l, ties by lower index
    """
    granularities = { s.granularity for s in scores }
    if len(granularities) > 1:
        raise ContractError("Mixed granularities in layer scores: %s" % sorted(granularities))
    granularity = granularities.pop() if granularities else 'block'
    keep_out = _protected_set(protected)
    candidates = [s for s in scores if (s.component, s.layer) not in keep_out]
    if k < 0 or (k > 0 and k >= len(candidates)):
        raise InputError("Cannot remove %d of %d candidate layers" % (k, len(candidates)))
    ordered = sorted(candidates, key=lambda s: (-s.score, s.component, s.layer))
    chosen = sorted(ordered[:k], key=lambda s: (s.component, s.layer))
    removals = [Removal(s.component, s.layer, DEPTH_TARGETS[granularity]) for s in chosen]
    return PruningPlan('depth', removals, granularity=granularity, protected=sorted(keep_out))


def _check_ratio(ratio: float) -> None:
    if not (0 <= ratio < 1):
        raise InputError("Ratio %s out of [0, 1)" % ratio)


def plan_width(reports: Sequence[ImportanceReport], ratio: float,
               protected: Optional[Iterable[Sequence]] = None) -> PruningPlan:
    """ Remove the floor(ratio * dm) lowest scoring neurons of every layer

        Without an explicit `protected` list the first and last generation
        layers are left intact.
    """
    _check_ratio(ratio)
    if isinstance(reports, ImportanceReport):
        reports = [reports]
    if protected is None:
        gen_layers = sorted(r.layer for r in reports if r.component == 'gen')
        protected = { ('gen', gen_layers[0]), ('gen', gen_layers[-1]) } if gen_layers else ()
    keep_out = _protected_set(protected)
    removals = []
    provenance = {}
    for rep in sorted(reports, key=lambda r: (r.component, r.layer)):
        provenance = provenance or dict(rep.provenance)
        if (rep.component, rep.layer) in keep_out:
            continue
        n = int(np.floor(ratio * rep.width))
        if n == 0:
            continue
        drop = sorted(int(i) for i in rank(rep.scores)[rep.width - n:])
        removals.extend(Removal(rep.component, rep.layer, 'neuron', i) for i in drop)
    return PruningPlan('width', removals, ratio=ratio, protected=sorted(keep_out), provenance=provenance)


def plan_heads(trace: ActivationTrace, model: UnifiedToyModel, ratio: float, component: str = 'gen',
               protected: Optional[Iterable[Sequence]] = None) -> PruningPlan:
    """ Remove the floor(ratio * H) lowest scoring heads of every layer
    """
    _check_ratio(ratio)
    keep_out = _protected_set(default_protected(model, component) if protected is None else protected)
    removals = []
    for b in model.blocks(component):
        if b.attn is None or (component, b.index) in keep_out:
            continue
        scores = head_scores(trace, model, component, b.index)
        n = int(np.floor(ratio * scores.shape[0]))
        if n == 0:
            continue
        drop = sorted(int(h) for h in rank(scores)[scores.shape[0] - n:])
        removals.extend(Removal(component, b.index, 'head', h) for h in drop)
    return PruningPlan('heads', removals, ratio=ratio, protected=sorted(keep_out),
                       provenance={ 'task': trace.task, 'sources': list(trace.sources) })


#
# Execution
#

def _apply_depth(model: UnifiedToyModel, plan: PruningPlan) -> None:
    for (component, layer), group in plan.by_layer().items():
        block = model.block(component, layer)
        for r in group:
            if r.kind == 'block':
                model.blocks(component).remove(block)
            elif r.kind == 'mlp':
                if block.mlp is None:
                    raise ContractError("MLP of %s:%d already removed" % (component, layer))
                block.mlp = block.norm_mlp = None
            elif r.kind == 'attn':
                if block.attn is None:
                    raise ContractError("Attention of %s:%d already removed" % (component, layer))
                block.attn = block.norm_attn = None
            else:
                raise ContractError("Invalid depth removal kind '%s'" % r.kind)
    for component in ('und', 'gen'):
        if not model.blocks(component):
            raise ContractError("Depth plan removes every %s layer" % component)


def _apply_width(model: UnifiedToyModel, plan: PruningPlan) -> None:
    for (component, layer), group in plan.by_layer().items():
        block = model.block(component, layer)
        if block.mlp is None or block.mlp.kind != 'dense':
            raise ContractError("Layer %s:%d has no dense MLP to prune" % (component, layer))
        if any(r.kind != 'neuron' for r in group):
            raise ContractError("Invalid width removal in %s:%d" % (component, layer))
        block.mlp = block.mlp.remove_neurons([r.index for r in group])


def _apply_heads(model: UnifiedToyModel, plan: PruningPlan) -> None:
    for (component, layer), group in plan.by_layer().items():
        block = model.block(component, layer)
        if block.attn is None:
            raise ContractError("Layer %s:%d has no self-attention" % (component, layer))
        if any(r.kind != 'head' for r in group):
            raise ContractError("Invalid head removal in %s:%d" % (component, layer))
        if len(group) >= block.attn.n_heads:
            raise ContractError("Plan removes every head of %s:%d" % (component, layer))
        block.attn = block.attn.remove_heads([r.index for r in group])


_APPLY = {
    'depth': _apply_depth,
    'width': _apply_width,
    'heads': _apply_heads,
}


def apply(model: UnifiedToyModel, plan: PruningPlan) -> UnifiedToyModel:
    """ Return a compressed copy of the model, the original is left untouched
    """
    compressed = model.copy()
    _APPLY[plan.kind](compressed, plan)
    compressed.plans.append(plan.to_dict())
    LOGGER.info("Applied %s plan: %d removals", plan.kind, len(plan))
    return compressed
