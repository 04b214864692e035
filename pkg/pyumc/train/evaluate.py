#
# Copyright 2026 py-umc authors
#
# This Source Code Form is subject to the terms of the Mozilla Public
# License, v. 2.0. If a copy of the MPL was not distributed with this
# file, You can obtain one at http://mozilla.org/MPL/2.0/.
#
""" Held-out evaluation
"""
import math
import logging

import numpy as np

from dataclasses import dataclass, asdict
from typing import Optional

from .. import numerics as nx
from ..data import Dataset, next_token_mask
from ..model import (UnifiedToyModel,
                     CONDITIONING,
                     forward_und,
                     forward_gen,
                     sample_gen,
                     parameter_count,
                     activated_parameter_count)
from ..moe import moe_activated_fraction

LOGGER = logging.getLogger('UMCLOG')


@dataclass(frozen=True)
class EvalResult:
    und_accuracy: float
    und_perplexity: float
    gen_mse: float
    gen_fidelity: float
    activated_params: int
    total_params: int
    # Activated share of expert parameters in sparse MoE layers, None when dense
    moe_activated_fraction: Optional[float] = None

    def to_dict(self) -> dict:
        return asdict(self)

    def summary(self) -> str:
        return ("acc=%.4f ppl=%.4f mse=%.5f fidelity=%.4f params=%d/%d" % (
                self.und_accuracy, self.und_perplexity, self.gen_mse, self.gen_fidelity,
                self.activated_params, self.total_params))


def nearest_pattern(outputs: np.ndarray, patterns: np.ndarray) -> np.ndarray:
    """ Index of the closest class pattern (L2) of every output
    """
    flat = outputs.reshape(outputs.shape[0], -1).astype(np.float64)
    ref = patterns.reshape(patterns.shape[0], -1).astype(np.float64)
    dist = np.linalg.norm(flat[:, None, :] - ref[None, :, :], axis=-1)
    return np.argmin(dist, axis=1)


def _chunks(n: int, size: int):
    for start in range(0, n, size):
        yield np.arange(start, min(start + size, n))


def evaluate(model: UnifiedToyModel, dataset: Dataset, split: str = 'heldout', seed: int = 0,
             batch_size: int = 64) -> EvalResult:
    """ Accuracy, perplexity, velocity MSE, prompt fidelity and parameter counts
    """
    spec = dataset.spec
    data = dataset.split(split)
    dtype = nx.default_dtype()
    n = len(data)
    T = data.tokens.shape[1]
    mask = next_token_mask(spec, T)
    rng = np.random.default_rng(seed)
    noise_all = rng.standard_normal(dataset.targets(split).shape)
    t_all = rng.random(n)

    correct = 0
    counted = 0
    nll = 0.0
    sq_err = 0.0
    sq_count = 0
    hits = 0
    for index in _chunks(n, batch_size):
        tokens = data.tokens[index]
        logits = forward_und(model, tokens).logits.data[:, :-1][:, mask].astype(np.float64)
        targets = tokens[:, 1:][:, mask]
        z = logits - logits.max(axis=-1, keepdims=True)
        logp = z - np.log(np.exp(z).sum(axis=-1, keepdims=True))
        nll -= np.take_along_axis(logp, targets[..., None], axis=-1).sum()
        correct += int((logits.argmax(axis=-1) == targets).sum())
        counted += targets.size

        prompts = tokens[:, :spec.prompt_length]
        target = dataset.patterns[data.classes[index]]
        noise = noise_all[index]
        t = t_all[index]
        tt = t[:, None, None]
        x_t = ((1 - tt) * noise + tt * target).astype(dtype)
        features = forward_und(model, prompts, purpose=CONDITIONING).features
        v = forward_gen(model, features, x_t, t).data.astype(np.float64)
        sq_err += float(((v - (target - noise)) ** 2).sum())
        sq_count += v.size

        generated = sample_gen(model, prompts, seed=[seed + int(i) for i in index]).data
        hits += int((nearest_pattern(generated, dataset.patterns) == data.classes[index]).sum())

    result = EvalResult(und_accuracy=correct / counted,
                        und_perplexity=math.exp(nll / counted),
                        gen_mse=sq_err / sq_count,
                        gen_fidelity=hits / n,
                        activated_params=activated_parameter_count(model, 'generation'),
                        total_params=parameter_count(model),
                        moe_activated_fraction=moe_activated_fraction(model))
    LOGGER.info("Evaluation on %s: %s", split, result.summary())
    return result
