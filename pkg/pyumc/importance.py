#
# Copyright 2026 py-umc authors
#
# This Source Code Form is subject to the terms of the Mozilla Public
# License, v. 2.0. If a copy of the MPL was not distributed with this
# file, You can obtain one at http://mozilla.org/MPL/2.0/.
#
""" Layer redundancy, neuron and head importance scores
"""
import logging

import numpy as np

from dataclasses import dataclass, field
from typing import List, Optional

from .exceptions import ContractError
from .model import UnifiedToyModel, COMPONENTS
from .trace import ActivationTrace

LOGGER = logging.getLogger('UMCLOG')


@dataclass(frozen=True)
class LayerScore:
    component: str
    layer: int
    granularity: str
    # Mean per-token cosine between the (sub)layer input and output
    score: float


@dataclass
class ImportanceReport:
    component: str
    layer: int
    scores: np.ndarray
    head_scores: Optional[np.ndarray] = None
    provenance: dict = field(default_factory=dict)

    @property
    def width(self) -> int:
        return self.scores.shape[0]

    @property
    def provenance_id(self) -> str:
        return '%s:%s' % (self.provenance.get('task', ''), '+'.join(self.provenance.get('sources', [])))


def layer_scores(trace: ActivationTrace, granularity: str, component: Optional[str] = None) -> List[LayerScore]:
    """ S_l = mean over tokens of cosine(x_l, y_l), higher means more redundant
    """
    if trace.granularity != granularity:
        raise ContractError("Trace recorded at '%s' granularity, '%s' requested" % (trace.granularity,
                                                                                    granularity))
    out = []
    for comp, layer in trace.keys(component):
        if trace.stats(comp, layer).cos_count == 0:
            # Sublayer absent (already removed)
            continue
        out.append(LayerScore(comp, layer, granularity, float(np.clip(trace.mean_cosine(comp, layer), -1, 1))))
    return out


def _mlp(model: UnifiedToyModel, component: str, layer: int):
    mlp = model.block(component, layer).mlp
    if mlp is None:
        raise ContractError("Layer %s:%d has no MLP" % (component, layer))
    return mlp


def neuron_scores(trace: ActivationTrace, model: UnifiedToyModel, component: str, layer: int,
                  expectation: Optional[str] = None) -> np.ndarray:
    """ s_i = E[|h_i|] * ||W_d[:, i]||_2
    """
    mlp = _mlp(model, component, layer)
    stats = trace.stats(component, layer)
    if stats.width != mlp.width:
        raise ContractError("Stale trace for %s:%d: recorded width %d, live width %d" % (
                            component, layer, stats.width, mlp.width))
    return trace.neuron_means(component, layer, expectation) * mlp.down_column_norms()


def head_scores(trace: ActivationTrace, model: UnifiedToyModel, component: str, layer: int) -> np.ndarray:
    """ s_h = E[||a_h||_2] * ||W_O[:, h]||_F
    """
    attn = model.block(component, layer).attn
    if attn is None:
        raise ContractError("Layer %s:%d has no self-attention" % (component, layer))
    stats = trace.stats(component, layer)
    if stats.n_heads != attn.n_heads:
        raise ContractError("Stale trace for %s:%d: recorded %d heads, live %d" % (
                            component, layer, stats.n_heads, attn.n_heads))
    return trace.head_means(component, layer) * attn.output_slice_norms()


def importance_reports(trace: ActivationTrace, model: UnifiedToyModel, component: Optional[str] = None,
                       expectation: Optional[str] = None) -> List[ImportanceReport]:
    """ One report per live MLP layer of the selected component(s)
    """
    provenance = { 'task': trace.task, 'sources': list(trace.sources) }
    reports = []
    for comp in COMPONENTS if component is None else (component,):
        for b in model.blocks(comp):
            if b.mlp is None:
                continue
            heads = head_scores(trace, model, comp, b.index) if b.attn is not None else None
            reports.append(ImportanceReport(comp, b.index, neuron_scores(trace, model, comp, b.index, expectation),
                                            head_scores=heads, provenance=dict(provenance)))
    LOGGER.debug("Computed %d importance reports (task=%s)", len(reports), trace.task)
    return reports


def rank(scores: np.ndarray) -> np.ndarray:
    """ Indices by descending score, ties by lower index
    """
    return np.argsort(-np.asarray(scores), kind='stable')
