#
# Copyright 2026 py-umc authors
#
# This Source Code Form is subject to the terms of the Mozilla Public
# License, v. 2.0. If a copy of the MPL was not distributed with this
# file, You can obtain one at http://mozilla.org/MPL/2.0/.
#
""" Activation statistics of calibration runs

    Statistics are streamed: a trace holds running sums and counts,
    never raw activations, so that memory does not grow with the number
    of calibration tokens. Per observation (one sample, or one sample at
    one sampling step for generation) only the top-p membership bitset
    of the MLP neurons is kept.
"""
import logging

import numpy as np

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Dict, Iterator, List, Optional, Tuple

from . import numerics as nx
from .config import confservice
from .data import CalibrationBatch
from .exceptions import ContractError, InputError
from .logger import memory_logger
from .model import ForwardProbe, UnifiedToyModel, COMPONENTS, forward_und, sample_gen

LOGGER = logging.getLogger('UMCLOG')

GRANULARITIES = ('block', 'mlp', 'attn')
EXPECTATIONS = ('token', 'sequence')

LayerKey = Tuple[str, int]


def top_p_count(width: int, p: float) -> int:
    return int(np.floor(p * width))


def top_p_indices(values: np.ndarray, p: float) -> np.ndarray:
    """ Indices of the floor(p * n) largest values, ties broken by lower index
    """
    n = top_p_count(values.shape[-1], p)
    order = np.argsort(-values, kind='stable')
    return order[:n]


def top_p_mask(values: np.ndarray, p: float) -> np.ndarray:
    mask = np.zeros(values.shape[-1], dtype=bool)
    mask[top_p_indices(values, p)] = True
    return mask


@dataclass
class LayerStats:
    """ Running statistics of one (component, layer)
    """
    width: int
    n_heads: int
    abs_sum: np.ndarray
    tokens: int = 0
    seq_mean_sum: Optional[np.ndarray] = None
    sequences: int = 0
    cos_sum: float = 0.0
    cos_count: int = 0
    head_sum: Optional[np.ndarray] = None
    head_tokens: int = 0
    # Packed top-p membership, one row per observation
    bitsets: Optional[np.ndarray] = None

    @classmethod
    def empty(cls, width: int, n_heads: int) -> 'LayerStats':
        return cls(width=width, n_heads=n_heads,
                   abs_sum=np.zeros(width),
                   seq_mean_sum=np.zeros(width),
                   head_sum=np.zeros(n_heads),
                   bitsets=np.zeros((0, (width + 7) // 8), dtype=np.uint8))

    @property
    def observations(self) -> int:
        return self.bitsets.shape[0]

    def membership(self) -> np.ndarray:
        """ Unpacked bitsets [observations x width] as booleans
        """
        return np.unpackbits(self.bitsets, axis=1, count=self.width).astype(bool)

    def merged(self, other: 'LayerStats') -> 'LayerStats':
        bitsets = np.concatenate([self.bitsets, other.bitsets], axis=0)
        if bitsets.shape[0]:
            # Canonical row order makes the merge commutative
            bitsets = bitsets[np.lexsort(bitsets.T[::-1])]
        return LayerStats(width=self.width, n_heads=self.n_heads,
                          abs_sum=self.abs_sum + other.abs_sum,
                          tokens=self.tokens + other.tokens,
                          seq_mean_sum=self.seq_mean_sum + other.seq_mean_sum,
                          sequences=self.sequences + other.sequences,
                          cos_sum=self.cos_sum + other.cos_sum,
                          cos_count=self.cos_count + other.cos_count,
                          head_sum=self.head_sum + other.head_sum,
                          head_tokens=self.head_tokens + other.head_tokens,
                          bitsets=bitsets)


@dataclass
class ActivationTrace:
    """ Per (component, layer) calibration statistics
    """
    task: str
    granularity: str
    top_p: float
    expectation: str
    weighted: bool
    layers: Dict[LayerKey, LayerStats] = field(default_factory=dict)
    sources: List[str] = field(default_factory=list)

    @property
    def options(self) -> dict:
        return {
            'task': self.task,
            'granularity': self.granularity,
            'top_p': self.top_p,
            'expectation': self.expectation,
            'weighted': self.weighted,
        }

    def topology(self) -> Dict[LayerKey, Tuple[int, int]]:
        return { key: (s.width, s.n_heads) for key, s in self.layers.items() }

    def keys(self, component: Optional[str] = None) -> List[LayerKey]:
        return sorted(k for k in self.layers if component is None or k[0] == component)

    def stats(self, component: str, layer: int) -> LayerStats:
        try:
            return self.layers[(component, layer)]
        except KeyError:
            raise ContractError("No statistics for layer %s:%d" % (component, layer)) from None

    def neuron_means(self, component: str, layer: int, expectation: Optional[str] = None) -> np.ndarray:
        """ Expected |h_i| per neuron
        """
        s = self.stats(component, layer)
        expectation = expectation or self.expectation
        if expectation == 'sequence':
            return s.seq_mean_sum / max(s.sequences, 1)
        return s.abs_sum / max(s.tokens, 1)

    def head_means(self, component: str, layer: int) -> np.ndarray:
        s = self.stats(component, layer)
        return s.head_sum / max(s.head_tokens, 1)

    def mean_cosine(self, component: str, layer: int) -> float:
        s = self.stats(component, layer)
        return s.cos_sum / max(s.cos_count, 1)

    def empty_like(self) -> 'ActivationTrace':
        return replace(self, layers={ k: LayerStats.empty(w, h) for k, (w, h) in self.topology().items() },
                       sources=[])

    def check_compatible(self, model: UnifiedToyModel) -> None:
        """ Raise if the model topology changed since recording
        """
        if self.topology() != model_topology(model):
            raise ContractError("Trace topology does not match the model (stale trace)")

    #
    # Serialization
    #

    def to_arrays(self) -> Tuple[Dict[str, np.ndarray], dict]:
        arrays = {}
        layers = []
        for (component, layer), s in sorted(self.layers.items()):
            prefix = '%s.%d.' % (component, layer)
            arrays[prefix + 'abs_sum'] = s.abs_sum
            arrays[prefix + 'seq_mean_sum'] = s.seq_mean_sum
            arrays[prefix + 'head_sum'] = s.head_sum
            arrays[prefix + 'bitsets'] = s.bitsets
            layers.append({'component': component, 'layer': layer, 'width': s.width, 'n_heads': s.n_heads,
                           'tokens': s.tokens, 'sequences': s.sequences, 'cos_sum': s.cos_sum,
                           'cos_count': s.cos_count, 'head_tokens': s.head_tokens})
        meta = dict(self.options, layers=layers, sources=list(self.sources))
        return arrays, meta

    @classmethod
    def from_arrays(cls, arrays: Dict[str, np.ndarray], meta: dict) -> 'ActivationTrace':
        trace = cls(task=meta['task'], granularity=meta['granularity'], top_p=meta['top_p'],
                    expectation=meta['expectation'], weighted=meta['weighted'], sources=list(meta['sources']))
        for info in meta['layers']:
            prefix = '%s.%d.' % (info['component'], info['layer'])
            trace.layers[(info['component'], info['layer'])] = LayerStats(
                width=info['width'], n_heads=info['n_heads'],
                abs_sum=arrays[prefix + 'abs_sum'],
                tokens=info['tokens'],
                seq_mean_sum=arrays[prefix + 'seq_mean_sum'],
                sequences=info['sequences'],
                cos_sum=info['cos_sum'],
                cos_count=info['cos_count'],
                head_sum=arrays[prefix + 'head_sum'],
                head_tokens=info['head_tokens'],
                bitsets=arrays[prefix + 'bitsets'])
        return trace


def model_topology(model: UnifiedToyModel) -> Dict[LayerKey, Tuple[int, int]]:
    topo = {}
    for component in COMPONENTS:
        for b in model.blocks(component):
            width = b.mlp.width if b.mlp is not None else 0
            heads = b.attn.n_heads if b.attn is not None else 0
            topo[(component, b.index)] = (width, heads)
    return topo


def merge(a: ActivationTrace, b: ActivationTrace) -> ActivationTrace:
    """ Count-weighted combination of two traces, commutative and associative
    """
    if a.options != b.options:
        raise ContractError("Cannot merge traces with different options: %s vs %s" % (a.options, b.options))
    if a.topology() != b.topology():
        raise ContractError("Cannot merge traces recorded on different topologies")
    layers = { k: a.layers[k].merged(b.layers[k]) for k in a.layers }
    return replace(a, layers=layers, sources=sorted(set(a.sources) | set(b.sources)))


class TraceProbe(ForwardProbe):
    """ Accumulate statistics into a trace while the model runs
    """

    def __init__(self, trace: ActivationTrace, model: UnifiedToyModel) -> None:
        self.trace = trace
        self.kind = 'block' if trace.granularity == 'block' else trace.granularity
        self.down_norms = {}
        if trace.weighted:
            for component in COMPONENTS:
                for b in model.blocks(component):
                    if b.mlp is not None:
                        self.down_norms[(component, b.index)] = b.mlp.down_column_norms()

    def _stats(self, component: str, layer: int) -> LayerStats:
        return self.trace.layers[(component, layer)]

    def _cosine(self, component: str, layer: int, x: np.ndarray, y: np.ndarray) -> None:
        s = self._stats(component, layer)
        cos = nx.rowwise_cosine(x, y)
        s.cos_sum += float(cos.sum())
        s.cos_count += cos.size

    def block(self, component, layer, x, y):
        if self.kind == 'block':
            self._cosine(component, layer, x, y)

    def sublayer(self, component, layer, kind, x, y):
        if self.kind == kind:
            self._cosine(component, layer, x, y)

    def mlp_hidden(self, component, layer, h):
        s = self._stats(component, layer)
        a = np.abs(h.astype(np.float64))
        B, T = a.shape[0], a.shape[1]
        s.abs_sum += a.sum(axis=(0, 1))
        s.tokens += B * T
        per_obs = a.mean(axis=1)
        s.seq_mean_sum += per_obs.sum(axis=0)
        s.sequences += B
        if self.trace.weighted:
            per_obs = per_obs * self.down_norms[(component, layer)]
        rows = np.stack([top_p_mask(v, self.trace.top_p) for v in per_obs])
        s.bitsets = np.concatenate([s.bitsets, np.packbits(rows, axis=1)], axis=0)

    def heads(self, component, layer, a):
        s = self._stats(component, layer)
        norms = np.linalg.norm(a.astype(np.float64), axis=-1)
        s.head_sum += norms.sum(axis=(0, 2))
        s.head_tokens += norms.shape[0] * norms.shape[2]


def _new_trace(model: UnifiedToyModel, task: str, granularity: str, top_p: float, expectation: str,
               weighted: bool) -> ActivationTrace:
    trace = ActivationTrace(task=task, granularity=granularity, top_p=top_p, expectation=expectation,
                            weighted=weighted)
    trace.layers = { k: LayerStats.empty(w, h) for k, (w, h) in model_topology(model).items() }
    return trace


def _chunks(n: int, parts: int) -> Iterator[np.ndarray]:
    for idx in np.array_split(np.arange(n), parts):
        if idx.size:
            yield idx


def _record_chunk(model: UnifiedToyModel, batch: CalibrationBatch, index: np.ndarray, trace: ActivationTrace,
                  steps: int, dtype_name: str) -> ActivationTrace:
    with nx.precision(dtype_name):
        probe = TraceProbe(trace, model)
        samples = batch.samples[index]
        if batch.task == 'understanding':
            forward_und(model, samples, probe=probe)
        else:
            # Follow the actual sampling trajectory, one observation per (sample, step)
            sample_gen(model, samples, seed=[batch.seed + int(i) for i in index], steps=steps, probe=probe)
    return trace


def record(model: UnifiedToyModel, batch: CalibrationBatch, granularity: str = 'block',
           steps: Optional[int] = None, top_p: Optional[float] = None, expectation: Optional[str] = None,
           weighted: bool = False, workers: Optional[int] = None) -> ActivationTrace:
    """ Run the calibration batch through the model and collect statistics

        The model is not modified. With `workers` > 1 the batch is split over
        independent read-only replicas and the partial traces are merged.
    """
    if batch.count < 1:
        raise InputError("Empty calibration batch")
    if granularity not in GRANULARITIES:
        raise InputError("Unknown granularity '%s'" % granularity)
    top_p = top_p if top_p is not None else confservice.getfloat('calibration', 'top_p', fallback=0.5)
    if not (0 < top_p < 1):
        raise InputError("top_p must be in (0, 1)")
    expectation = expectation or confservice.get('calibration', 'expectation', fallback='token')
    if expectation not in EXPECTATIONS:
        raise InputError("Unknown expectation '%s'" % expectation)
    workers = workers or confservice.getint('calibration', 'workers', fallback=1)
    steps = steps or batch.steps or model.config.gen_steps
    dtype_name = nx.default_dtype().name

    LOGGER.info("Recording %s calibration '%s' (%d samples, granularity=%s, workers=%d)",
                batch.task, batch.id, batch.count, granularity, workers)

    def fresh():
        return _new_trace(model, batch.task, granularity, top_p, expectation, weighted)

    with memory_logger('calibration %s' % batch.id):
        if workers <= 1:
            trace = _record_chunk(model, batch, np.arange(batch.count), fresh(), steps, dtype_name)
        else:
            parts = list(_chunks(batch.count, workers))
            with ThreadPoolExecutor(max_workers=workers) as pool:
                futures = [pool.submit(_record_chunk, model.copy(), batch, idx, fresh(), steps, dtype_name)
                           for idx in parts]
                partials = [f.result() for f in futures]
            trace = partials[0]
            for other in partials[1:]:
                trace = merge(trace, other)
    trace.sources = [batch.id]
    return trace
