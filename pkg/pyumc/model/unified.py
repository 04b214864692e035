#
# Copyright 2026 py-umc authors
#
# This Source Code Form is subject to the terms of the Mozilla Public
# License, v. 2.0. If a copy of the MPL was not distributed with this
# file, You can obtain one at http://mozilla.org/MPL/2.0/.
#
""" Toy unified multimodal model

    The understanding stack is a causal transformer over token ids with
    a vocabulary head. Its final hidden states condition the generation
    stack, a cross-attention denoiser predicting flow-matching velocities.
"""
import copy
import math
import logging

import numpy as np

from typing import Dict, Iterator, List, NamedTuple, Optional, Sequence, Tuple, Union

from .. import numerics as nx
from ..numerics import Tensor
from ..exceptions import ContractError, DimensionError, InputError
from .config import ModelConfig
from .layers import (Attention,
                     MlpLayer,
                     NamedParameter,
                     TransformerBlock,
                     init_weight,
                     stack_parameters)
from .probe import ForwardProbe

LOGGER = logging.getLogger('UMCLOG')

COMPONENTS = ('und', 'gen')

# Purposes served by the understanding stack
UNDERSTANDING = 'understanding'
CONDITIONING = 'conditioning'


class UndOutput(NamedTuple):
    logits: Tensor
    features: Tensor
    probe: Optional[ForwardProbe]


class UnifiedToyModel:
    """ Understanding stack (theta_und) and generation stack (theta_gen)
    """

    def __init__(self, config: ModelConfig) -> None:
        self.config = config
        self.und_blocks: List[TransformerBlock] = []
        self.gen_blocks: List[TransformerBlock] = []
        # Understanding parameters
        self.embed: Tensor = None
        self.pos: Tensor = None
        self.norm_und: Tensor = None
        self.head: Tensor = None
        # Generation parameters
        self.w_in: Tensor = None
        self.pos_gen: Tensor = None
        self.t_proj: Tensor = None
        self.t_bias: Tensor = None
        self.norm_gen: Tensor = None
        self.w_out: Tensor = None
        # Serving mode of MoE layers: (component, purpose) -> 'sparse' | 'dense'
        self.moe_modes: Dict[str, str] = {}
        self.moe_setup: Optional[str] = None
        # Provenance embedded in checkpoints
        self.plans: List[dict] = []
        self.partitions: List[dict] = []
        self.stage_history: List[str] = []

    @classmethod
    def init(cls, config: ModelConfig) -> 'UnifiedToyModel':
        """ Randomly initialized model, deterministic given config.seed
        """
        config.validate()
        rng = np.random.default_rng(config.seed)
        c = config
        d = c.d_model
        m = cls(config)
        m.embed = Tensor(rng.standard_normal((c.vocab_size, d)) * 0.5, requires_grad=True)
        m.pos = Tensor(rng.standard_normal((c.max_len, d)) * 0.1, requires_grad=True)
        m.und_blocks = [TransformerBlock.init(rng, i, d, c.d_ff, c.n_heads, causal=True, cross=False,
                                              eps=c.norm_eps) for i in range(c.n_layers_und)]
        m.norm_und = Tensor(np.ones(d), requires_grad=True)
        m.head = init_weight(rng, c.vocab_size, d)

        m.w_in = init_weight(rng, d, c.gen_output_dim)
        m.pos_gen = Tensor(rng.standard_normal((c.gen_length, d)) * 0.1, requires_grad=True)
        m.t_proj = init_weight(rng, d, c.timestep_features)
        m.t_bias = Tensor(np.zeros(d), requires_grad=True)
        m.gen_blocks = [TransformerBlock.init(rng, i, d, c.d_ff, c.n_heads, causal=False, cross=True,
                                              eps=c.norm_eps) for i in range(c.n_layers_gen)]
        m.norm_gen = Tensor(np.ones(d), requires_grad=True)
        # Zero initialized so that an untrained model predicts zero velocity
        m.w_out = Tensor(np.zeros((c.gen_output_dim, d)), requires_grad=True)
        return m

    #
    # Structure
    #

    def blocks(self, component: str) -> List[TransformerBlock]:
        if component == 'und':
            return self.und_blocks
        if component == 'gen':
            return self.gen_blocks
        raise ContractError("Unknown component '%s'" % component)

    def block(self, component: str, layer: int) -> TransformerBlock:
        """ Return the live block with the given original index
        """
        for b in self.blocks(component):
            if b.index == layer:
                return b
        raise ContractError("No live layer %s:%d" % (component, layer))

    def parameters(self) -> Iterator[NamedParameter]:
        """ Named parameters in a fixed order
        """
        yield 'und.embed', self.embed
        yield 'und.pos', self.pos
        yield from stack_parameters(self.und_blocks, 'und.')
        yield 'und.norm', self.norm_und
        yield 'und.head', self.head
        yield 'gen.w_in', self.w_in
        yield 'gen.pos', self.pos_gen
        yield 'gen.t_proj', self.t_proj
        yield 'gen.t_bias', self.t_bias
        yield from stack_parameters(self.gen_blocks, 'gen.')
        yield 'gen.norm', self.norm_gen
        yield 'gen.w_out', self.w_out

    def state_dict(self) -> Dict[str, np.ndarray]:
        return { name: t.data for name, t in self.parameters() }

    def load_state_dict(self, state: Dict[str, np.ndarray]) -> None:
        params = dict(self.parameters())
        missing = set(params) - set(state)
        unexpected = set(state) - set(params)
        if missing or unexpected:
            raise ContractError("State mismatch: missing=%s unexpected=%s" % (sorted(missing), sorted(unexpected)))
        for name, t in params.items():
            value = state[name]
            if value.shape != t.shape:
                raise DimensionError("%s: expected %s got %s" % (name, t.shape, value.shape))
            t.data = np.array(value)

    def describe(self) -> dict:
        """ Structure needed to rebuild the model skeleton
        """
        def _layers(blocks):
            out = []
            for b in blocks:
                desc = b.describe()
                if b.mlp is not None and b.mlp.kind == 'moe':
                    desc['moe'] = b.mlp.describe()
                out.append(desc)
            return out
        return {
            'und': _layers(self.und_blocks),
            'gen': _layers(self.gen_blocks),
            'moe_modes': dict(self.moe_modes),
            'moe_setup': self.moe_setup,
        }

    @classmethod
    def from_structure(cls, config: ModelConfig, structure: dict) -> 'UnifiedToyModel':
        """ Build a zero-filled skeleton matching a described structure
        """
        from ..moe import MoELayer

        c = config.validate()
        d, hd = c.d_model, c.head_dim
        m = cls(config)

        def zeros(*shape):
            return Tensor(np.zeros(shape), requires_grad=True)

        def attention(n_heads, causal=False, cross=False):
            inner = n_heads * hd
            return Attention(zeros(inner, d), zeros(inner, d), zeros(inner, d), zeros(d, inner), hd,
                             causal=causal, cross=cross)

        def build(descs, causal, cross):
            blocks = []
            for desc in descs:
                attn = attention(desc['attn'], causal=causal) if desc['attn'] is not None else None
                xattn = attention(desc['xattn'], cross=True) if desc.get('xattn') is not None else None
                if desc['mlp'] == 'dense':
                    mlp = MlpLayer(zeros(desc['width'], d), zeros(desc['width'], d), zeros(d, desc['width']))
                elif desc['mlp'] == 'moe':
                    mlp = MoELayer.skeleton(desc['moe'], d)
                else:
                    mlp = None
                blocks.append(TransformerBlock(desc['index'], attn, mlp,
                                               zeros(d) if attn is not None else None,
                                               zeros(d) if mlp is not None else None,
                                               xattn=xattn,
                                               norm_xattn=zeros(d) if xattn is not None else None,
                                               eps=c.norm_eps))
            return blocks

        m.embed = zeros(c.vocab_size, d)
        m.pos = zeros(c.max_len, d)
        m.und_blocks = build(structure['und'], causal=True, cross=False)
        m.norm_und = zeros(d)
        m.head = zeros(c.vocab_size, d)
        m.w_in = zeros(d, c.gen_output_dim)
        m.pos_gen = zeros(c.gen_length, d)
        m.t_proj = zeros(d, c.timestep_features)
        m.t_bias = zeros(d)
        m.gen_blocks = build(structure['gen'], causal=False, cross=True)
        m.norm_gen = zeros(d)
        m.w_out = zeros(c.gen_output_dim, d)
        m.moe_modes = dict(structure.get('moe_modes', {}))
        m.moe_setup = structure.get('moe_setup')
        return m

    def copy(self) -> 'UnifiedToyModel':
        return copy.deepcopy(self)

    def moe_mode(self, component: str, purpose: str) -> Optional[str]:
        return self.moe_modes.get('%s:%s' % (component, purpose))


def parameter_count(model: UnifiedToyModel) -> int:
    return int(sum(t.size for _, t in model.parameters()))


#
# Understanding
#

def _as_batch(tokens) -> Tuple[np.ndarray, bool]:
    ids = np.asarray(tokens, dtype=np.int64)
    if ids.ndim == 1:
        return ids[None, :], True
    if ids.ndim != 2:
        raise InputError("Token ids must be a sequence or a batch of sequences, got shape %s" % (ids.shape,))
    return ids, False


def forward_und(model: UnifiedToyModel, tokens, probe: Optional[ForwardProbe] = None,
                purpose: str = UNDERSTANDING) -> UndOutput:
    """ Causal logits [T x V] and conditioning features [T x d]

        A batch of sequences [B x T] yields [B x T x V] and [B x T x d].
    """
    c = model.config
    ids, single = _as_batch(tokens)
    B, T = ids.shape
    if T < 1 or T > c.max_len:
        raise InputError("Sequence length %d out of range [1, %d]" % (T, c.max_len))
    if ids.min() < 0 or ids.max() >= c.vocab_size:
        raise InputError("Token id out of vocabulary [0, %d)" % c.vocab_size)

    mode = model.moe_mode('und', purpose)
    x = nx.add(nx.embedding(model.embed, ids), nx.embedding(model.pos, np.arange(T)))
    for b in model.und_blocks:
        x = b(x, 'und', probe=probe, mode=mode)
    features = nx.rms_norm(x, model.norm_und, c.norm_eps)
    logits = nx.matmul(features, nx.transpose(model.head))
    if single:
        logits = nx.reshape(logits, (T, c.vocab_size))
        features = nx.reshape(features, (T, c.d_model))
    return UndOutput(logits, features, probe)


#
# Generation
#

def timestep_features(t: np.ndarray, n: int) -> np.ndarray:
    """ Sinusoidal features of t in [0, 1], shape [B, n]
    """
    half = n // 2
    freqs = np.exp(np.linspace(0.0, math.log(1000.0), half))
    angles = np.asarray(t, dtype=np.float64)[:, None] * freqs[None, :]
    return np.concatenate([np.sin(angles), np.cos(angles)], axis=-1)


def forward_gen(model: UnifiedToyModel, features: Tensor, x_t: Union[Tensor, np.ndarray], t,
                probe: Optional[ForwardProbe] = None) -> Tensor:
    """ Predicted velocity (target - noise) at x_t and time t

        features [T x d] or [B x T x d]; x_t [L x G] or [B x L x G];
        t a scalar or one value per batch item.
    """
    c = model.config
    x_t = nx.as_tensor(x_t)
    single = x_t.ndim == 2
    if single:
        x_t = nx.reshape(x_t, (1,) + x_t.shape)
    if features.ndim == 2:
        features = nx.reshape(features, (1,) + features.shape)
    B, L, G = x_t.shape
    if features.shape[-1] != c.d_model:
        raise DimensionError("Feature width %d does not match d_model %d" % (features.shape[-1], c.d_model))
    if features.shape[0] != B:
        raise DimensionError("Feature batch %s does not match x_t batch %s" % (features.shape, x_t.shape))
    if G != c.gen_output_dim or L > c.gen_length:
        raise DimensionError("x_t shape %s incompatible with [<=%d x %d]" % (x_t.shape, c.gen_length,
                                                                            c.gen_output_dim))
    t = np.broadcast_to(np.asarray(t, dtype=np.float64), (B,))
    if np.any(t < 0) or np.any(t > 1):
        raise InputError("Timestep out of [0, 1]")

    temb = nx.add(nx.matmul(Tensor(timestep_features(t, c.timestep_features)), nx.transpose(model.t_proj)),
                  model.t_bias)
    temb = nx.reshape(temb, (B, 1, c.d_model))

    mode = model.moe_mode('gen', 'generation')
    x = nx.add(nx.matmul(x_t, nx.transpose(model.w_in)), nx.embedding(model.pos_gen, np.arange(L)))
    # Injected once so that every block stays a pure residual update
    x = nx.add(x, temb)
    for b in model.gen_blocks:
        x = b(x, 'gen', context=features, probe=probe, mode=mode)
    v = nx.matmul(nx.rms_norm(x, model.norm_gen, c.norm_eps), nx.transpose(model.w_out))
    if single:
        v = nx.reshape(v, (L, G))
    return v


def initial_noise(config: ModelConfig, batch: int, seed) -> np.ndarray:
    shape = (config.gen_length, config.gen_output_dim)
    if np.ndim(seed) == 0:
        return np.random.default_rng(int(seed)).standard_normal((batch,) + shape)
    seeds = list(seed)
    if len(seeds) != batch:
        raise InputError("Expected %d noise seeds, got %d" % (batch, len(seeds)))
    return np.stack([np.random.default_rng(int(s)).standard_normal(shape) for s in seeds])


def sample_gen(model: UnifiedToyModel, tokens, seed: Union[int, Sequence[int]] = 0, steps: Optional[int] = None,
               probe: Optional[ForwardProbe] = None) -> Tensor:
    """ Euler integration of the predicted velocity from seeded Gaussian noise

        Deterministic given (model, tokens, seed). A batch of prompts [B x T]
        yields [B x L x G]; `seed` may then give one noise seed per prompt.
    """
    c = model.config
    steps = steps or c.gen_steps
    ids, single = _as_batch(tokens)
    B = ids.shape[0]
    dtype = nx.default_dtype()

    x = initial_noise(c, B, seed).astype(dtype)
    features = forward_und(model, ids, probe=probe, purpose=CONDITIONING).features
    dt = 1.0 / steps
    for k in range(steps):
        t = k * dt
        if probe is not None:
            probe.timestep(t)
        v = forward_gen(model, features, x, np.full(B, t), probe=probe)
        x = x + dtype.type(dt) * v.data
    out = Tensor.wrap(x)
    if single:
        out = Tensor.wrap(x[0])
    return out


def activated_parameter_count(model: UnifiedToyModel, purpose: str = 'generation') -> int:
    """ Parameters touched by one token of a forward pass

        Convention: every always-on parameter plus the activated expert
        slices of MoE layers under the serving mode of `purpose`.
    """
    modes = {
        'und': model.moe_mode('und', CONDITIONING if purpose == 'generation' else UNDERSTANDING),
        'gen': model.moe_mode('gen', 'generation'),
    }
    total = parameter_count(model)
    for component in COMPONENTS:
        for b in model.blocks(component):
            if b.mlp is not None and b.mlp.kind == 'moe':
                total -= b.mlp.expert_parameter_count() - b.mlp.activated_expert_parameter_count(modes[component])
    return int(total)
