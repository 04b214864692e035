#
# Copyright 2026 py-umc authors
#
# This Source Code Form is subject to the terms of the Mozilla Public
# License, v. 2.0. If a copy of the MPL was not distributed with this
# file, You can obtain one at http://mozilla.org/MPL/2.0/.
#
""" Training loops

    One joint objective serves every stage:
    w_und * CE(next token) + w_gen * MSE(velocity) [+ w_aux * load balance].
    The stage only decides which parameters are trainable.
"""
import math
import logging

import numpy as np

from dataclasses import dataclass, asdict, fields
from typing import Any, Dict, List, NamedTuple, Optional

from .. import numerics as nx
from ..config import confservice
from ..data import Dataset, next_token_mask
from ..exceptions import ConfigError, DivergenceError
from ..logger import log_step, memory_logger
from ..model import UnifiedToyModel, CONDITIONING, forward_und, forward_gen
from ..moe import RouterProbe, load_balance_loss
from .optim import STAGES, AdamW, check_stage, frozen, frozen_parameters

LOGGER = logging.getLogger('UMCLOG')

DEFAULT_STEPS = {
    'pretrain': 2000,
    'dense_finetune': 300,
    'expert_frozen': 300,
    'moe_full': 300,
}


@dataclass(frozen=True)
class TrainConfig:
    stage: str = 'pretrain'
    steps: Optional[int] = None
    batch_size: int = 32
    lr: float = 1e-3
    weight_decay: float = 0.01
    w_und: float = 1.0
    w_gen: float = 1.0
    # Load balancing regularizer, off by default
    w_aux: float = 0.0
    seed: int = 0
    # Run moe_full without a prior expert_frozen stage
    force: bool = False
    # None: frozen for und_gen conversions only
    freeze_und_experts: Optional[bool] = None

    def validate(self) -> 'TrainConfig':
        if self.stage not in STAGES:
            raise ConfigError("Unknown stage '%s'" % self.stage, locator='train:stage')
        if self.steps is not None and self.steps < 0:
            raise ConfigError("steps must be >= 0", locator='train:steps')
        if self.batch_size < 1:
            raise ConfigError("batch_size must be >= 1", locator='train:batch_size')
        if self.lr <= 0:
            raise ConfigError("lr must be > 0", locator='train:lr')
        return self

    @property
    def n_steps(self) -> int:
        return DEFAULT_STEPS[self.stage] if self.steps is None else self.steps

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> 'TrainConfig':
        known = { f.name for f in fields(cls) }
        unknown = set(data) - known
        if unknown:
            raise ConfigError("Unknown training options: %s" % ', '.join(sorted(unknown)), locator='train')
        return cls(**data).validate()


class LossPoint(NamedTuple):
    step: int
    loss_total: float
    loss_und: float
    loss_gen: float


class TrainResult(NamedTuple):
    model: UnifiedToyModel
    curve: List[LossPoint]


def joint_loss(model: UnifiedToyModel, dataset: Dataset, index: np.ndarray, rng: np.random.Generator,
               config: TrainConfig):
    """ Return (total, und, gen) loss tensors on the training samples `index`
    """
    spec = dataset.spec
    dtype = nx.default_dtype()
    tokens = dataset.train.tokens[index]
    B, T = tokens.shape
    probe = RouterProbe() if config.w_aux > 0 else None

    # Next token prediction on positions determined by their prefix
    targets = np.zeros_like(tokens)
    targets[:, :-1] = tokens[:, 1:]
    weights = np.zeros((B, T), dtype=dtype)
    weights[:, :-1] = next_token_mask(spec, T)
    logits = forward_und(model, tokens, probe=probe).logits
    loss_und = nx.cross_entropy(logits, targets, weights)

    # Flow matching on the prompt-conditioned class pattern
    prompts = tokens[:, :spec.prompt_length]
    target = dataset.patterns[dataset.train.classes[index]].astype(dtype)
    noise = rng.standard_normal(target.shape).astype(dtype)
    t = rng.random(B)
    tt = t.astype(dtype)[:, None, None]
    x_t = (1 - tt) * noise + tt * target
    features = forward_und(model, prompts, probe=probe, purpose=CONDITIONING).features
    v = forward_gen(model, features, x_t, t, probe=probe)
    loss_gen = nx.mse(v, target - noise)

    total = nx.add(nx.scale(loss_und, config.w_und), nx.scale(loss_gen, config.w_gen))
    if probe is not None:
        aux = load_balance_loss(probe)
        if aux is not None:
            total = nx.add(total, nx.scale(aux, config.w_aux))
    return total, loss_und, loss_gen


def train(model: UnifiedToyModel, dataset: Dataset, config: TrainConfig) -> TrainResult:
    """ Optimize the model in place for one stage
    """
    config.validate()
    check_stage(model, config.stage, force=config.force)
    params = list(model.parameters())
    frozen_names = frozen_parameters(model, config.stage, config.freeze_und_experts)
    optimizer = AdamW(params, lr=config.lr, weight_decay=config.weight_decay, frozen=frozen_names)
    rng = np.random.default_rng(config.seed)
    interval = confservice.getint('train', 'log_interval', fallback=50)
    n_train = len(dataset.train)

    LOGGER.info("Stage %s: %d steps, %d trainable / %d frozen tensors", config.stage, config.n_steps,
                len(optimizer.params), len(frozen_names))

    curve = []
    with memory_logger('train %s' % config.stage), frozen(params, frozen_names):
        for step in range(1, config.n_steps + 1):
            index = rng.choice(n_train, size=min(config.batch_size, n_train), replace=False)
            with nx.GradientTape() as tape:
                total, loss_und, loss_gen = joint_loss(model, dataset, index, rng, config)
            point = LossPoint(step, total.item(), loss_und.item(), loss_gen.item())
            if not all(math.isfinite(v) for v in point[1:]):
                raise DivergenceError("Non finite loss at step %d of %s: total=%s und=%s gen=%s" % (
                                      step, config.stage, point.loss_total, point.loss_und, point.loss_gen),
                                      locator='train:%s' % config.stage)
            tape.backward(total)
            optimizer.step()
            optimizer.zero_grad()
            curve.append(point)
            if step == 1 or step % interval == 0 or step == config.n_steps:
                log_step(config.stage, *point)

    model.stage_history.append(config.stage)
    return TrainResult(model, curve)


def pretrain(model: UnifiedToyModel, dataset: Dataset, config: Optional[TrainConfig] = None) -> TrainResult:
    """ Dense baseline training of a fresh model
    """
    config = config or TrainConfig(stage='pretrain')
    if config.stage != 'pretrain':
        raise ConfigError("pretrain called with stage '%s'" % config.stage, locator='train:stage')
    return train(model, dataset, config)


def tune(model: UnifiedToyModel, dataset: Dataset, config: TrainConfig) -> TrainResult:
    """ Dense finetuning, expert-frozen tuning or full MoE adaptation
    """
    if config.stage == 'pretrain':
        raise ConfigError("tune does not run the pretrain stage", locator='train:stage')
    return train(model, dataset, config)
