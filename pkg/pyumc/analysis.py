#
# Copyright 2026 py-umc authors
#
# This Source Code Form is subject to the terms of the Mozilla Public
# License, v. 2.0. If a copy of the MPL was not distributed with this
# file, You can obtain one at http://mozilla.org/MPL/2.0/.
#
""" Task overlap of important neurons and activation dynamics
"""
import logging

import numpy as np

from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

from .exceptions import ContractError, InputError
from .importance import ImportanceReport
from .trace import ActivationTrace, top_p_indices

LOGGER = logging.getLogger('UMCLOG')


@dataclass(frozen=True)
class LayerOverlap:
    component: str
    layer: int
    und_only: float
    gen_only: float
    shared: float


@dataclass
class OverlapReport:
    p: float
    layers: List[LayerOverlap] = field(default_factory=list)


@dataclass(frozen=True)
class LayerDynamics:
    component: str
    layer: int
    always_active: float
    inactive: float
    sample_dependent: float
    observations: int


@dataclass
class DynamicsReport:
    top_p: float
    weighted: bool
    layers: List[LayerDynamics] = field(default_factory=list)


def _index(reports: Sequence[ImportanceReport]) -> Dict[Tuple[str, int], ImportanceReport]:
    if isinstance(reports, ImportanceReport):
        reports = [reports]
    return { (r.component, r.layer): r for r in reports }


def overlap_layer(report_und: ImportanceReport, report_gen: ImportanceReport, p: float = 0.5) -> LayerOverlap:
    if report_und.width != report_gen.width:
        raise ContractError("Width mismatch on %s:%d: %d vs %d" % (report_und.component, report_und.layer,
                                                                   report_und.width, report_gen.width))
    top_und = set(top_p_indices(report_und.scores, p).tolist())
    top_gen = set(top_p_indices(report_gen.scores, p).tolist())
    union = top_und | top_gen
    if not union:
        raise InputError("Empty top-%s sets on %s:%d" % (p, report_und.component, report_und.layer))
    n = float(len(union))
    shared = len(top_und & top_gen)
    return LayerOverlap(report_und.component, report_und.layer,
                        und_only=(len(top_und) - shared) / n,
                        gen_only=(len(top_gen) - shared) / n,
                        shared=shared / n)


def overlap(reports_und: Sequence[ImportanceReport], reports_gen: Sequence[ImportanceReport],
            p: float = 0.5) -> OverlapReport:
    """ Split the union of both top-p neuron sets into und-only, gen-only and shared
    """
    if not (0 < p < 1):
        raise InputError("p must be in (0, 1)")
    und = _index(reports_und)
    gen = _index(reports_gen)
    if set(und) != set(gen):
        raise ContractError("Reports cover different layers")
    return OverlapReport(p, [overlap_layer(und[k], gen[k], p) for k in sorted(und)])


def dynamics_layer(trace: ActivationTrace, component: str, layer: int) -> LayerDynamics:
    stats = trace.stats(component, layer)
    if stats.observations == 0:
        raise InputError("No observation recorded for %s:%d" % (component, layer))
    member = stats.membership()
    always = member.all(axis=0)
    never = ~member.any(axis=0)
    w = float(stats.width)
    return LayerDynamics(component, layer,
                         always_active=always.sum() / w,
                         inactive=never.sum() / w,
                         sample_dependent=(stats.width - always.sum() - never.sum()) / w,
                         observations=stats.observations)


def dynamics(trace: ActivationTrace, component: Optional[str] = None) -> DynamicsReport:
    """ Always-active, inactive and sample-dependent neuron fractions

        A neuron is always active when it ranks in the top-p of every
        (sample, timestep) observation and inactive when it never does.
    """
    keys = [k for k in trace.keys(component) if trace.stats(*k).width > 0]
    if not keys or all(trace.stats(*k).observations == 0 for k in keys):
        raise InputError("Trace holds no observation")
    layers = [dynamics_layer(trace, c, l) for c, l in keys if trace.stats(c, l).observations]
    return DynamicsReport(trace.top_p, trace.weighted, layers)


def monte_carlo_overlap(width: int, p: float, seeds: int, rng: Optional[np.random.Generator] = None) -> float:
    """ Mean shared fraction of independent random score vectors
    """
    rng = rng or np.random.default_rng(0)
    values = []
    for _ in range(seeds):
        a = ImportanceReport('und', 0, rng.random(width))
        b = ImportanceReport('und', 0, rng.random(width))
        values.append(overlap_layer(a, b, p).shared)
    return float(np.mean(values))
