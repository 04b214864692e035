#
# Copyright 2026 py-umc authors
#
# This Source Code Form is subject to the terms of the Mozilla Public
# License, v. 2.0. If a copy of the MPL was not distributed with this
# file, You can obtain one at http://mozilla.org/MPL/2.0/.
#
""" Optimizer and trainability masks
"""
import logging

import numpy as np

from contextlib import contextmanager
from typing import Dict, List, Optional, Sequence, Set, Tuple

from ..exceptions import ConfigError
from ..model import UnifiedToyModel
from ..numerics import Tensor

LOGGER = logging.getLogger('UMCLOG')

STAGES = ('pretrain', 'dense_finetune', 'expert_frozen', 'moe_full')

EXPERT_MARKERS = ('.moe.shared.', '.moe.routed.')


def is_expert_parameter(name: str) -> bool:
    return any(marker in name for marker in EXPERT_MARKERS)


def has_moe(model: UnifiedToyModel) -> bool:
    return any(is_expert_parameter(name) for name, _ in model.parameters())


def frozen_parameters(model: UnifiedToyModel, stage: str,
                      freeze_und_experts: Optional[bool] = None) -> Set[str]:
    """ Names of the parameters held fixed by a training stage

        expert_frozen: every expert slice.
        moe_full: nothing, except understanding experts of an
        understanding-and-generation conversion (unless overridden).
    """
    if stage not in STAGES:
        raise ConfigError("Unknown stage '%s'" % stage, locator='train:stage')
    names = [name for name, _ in model.parameters()]
    if stage == 'expert_frozen':
        return { n for n in names if is_expert_parameter(n) }
    if stage == 'moe_full':
        if freeze_und_experts is None:
            freeze_und_experts = model.moe_setup == 'und_gen'
        if freeze_und_experts:
            return { n for n in names if n.startswith('und.') and is_expert_parameter(n) }
    return set()


def check_stage(model: UnifiedToyModel, stage: str, force: bool = False) -> None:
    """ Refuse stages that do not match the model state
    """
    moe = has_moe(model)
    if stage == 'pretrain' and (moe or model.plans or model.stage_history):
        raise ConfigError("pretrain expects a fresh dense model", locator='train:stage')
    if stage == 'dense_finetune' and moe:
        raise ConfigError("dense_finetune expects a dense model", locator='train:stage')
    if stage in ('expert_frozen', 'moe_full') and not moe:
        raise ConfigError("%s expects a converted MoE model" % stage, locator='train:stage')
    if stage == 'moe_full' and 'expert_frozen' not in model.stage_history and not force:
        raise ConfigError("moe_full requires a prior expert_frozen stage (use force to override)",
                          locator='train:stage')


@contextmanager
def frozen(params: Sequence[Tuple[str, Tensor]], names: Set[str]):
    """ Disable gradients of the named parameters for the duration of the block
    """
    saved = []
    for name, p in params:
        if name in names:
            saved.append((p, p.requires_grad))
            p.requires_grad = False
            p.grad = None
    try:
        yield
    finally:
        for p, flag in saved:
            p.requires_grad = flag


class AdamW:
    """ Adam with decoupled weight decay
    """

    def __init__(self, params: Sequence[Tuple[str, Tensor]], lr: float = 1e-3,
                 betas: Tuple[float, float] = (0.9, 0.999), eps: float = 1e-8,
                 weight_decay: float = 0.01, frozen: Optional[Set[str]] = None) -> None:
        frozen = frozen or set()
        self.params: List[Tuple[str, Tensor]] = [(n, p) for n, p in params if n not in frozen]
        self.lr = lr
        self.beta1, self.beta2 = betas
        self.eps = eps
        self.weight_decay = weight_decay
        self.t = 0
        self.m: Dict[str, np.ndarray] = {}
        self.v: Dict[str, np.ndarray] = {}

    def zero_grad(self) -> None:
        for _, p in self.params:
            p.grad = None

    def step(self) -> None:
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        c1 = 1.0 - b1 ** self.t
        c2 = 1.0 - b2 ** self.t
        for name, p in self.params:
            if p.grad is None:
                continue
            g = p.grad
            m = self.m.get(name)
            if m is None:
                m = self.m[name] = np.zeros_like(p.data)
                self.v[name] = np.zeros_like(p.data)
            v = self.v[name]
            m *= b1
            m += (1.0 - b1) * g
            v *= b2
            v += (1.0 - b2) * g * g
            if self.weight_decay and p.ndim >= 2:
                p.data -= (self.lr * self.weight_decay) * p.data
            p.data -= (self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)).astype(p.dtype)
