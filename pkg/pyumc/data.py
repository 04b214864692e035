#
# Copyright 2026 py-umc authors
#
# This Source Code Form is subject to the terms of the Mozilla Public
# License, v. 2.0. If a copy of the MPL was not distributed with this
# file, You can obtain one at http://mozilla.org/MPL/2.0/.
#
""" Synthetic tasks and calibration batches

    Every class c owns a band of the vocabulary. An understanding sample
    is a random motif drawn from the band of its class, repeated cyclically:
    from position `motif_length` on, the next token is the token
    `motif_length` positions back. A generation sample pairs the first
    `prompt_length` tokens of a sequence with the fixed target pattern of
    its class.
"""
import hashlib
import logging

import numpy as np

from dataclasses import dataclass, asdict, field, fields
from typing import Any, Dict, Optional, Tuple

from .exceptions import ConfigError, InputError

LOGGER = logging.getLogger('UMCLOG')

TASKS = ('understanding', 'generation')
SPLITS = ('train', 'heldout')

# Minimum pairwise L2 distance between class target patterns
MIN_PATTERN_DISTANCE = 1.0


@dataclass(frozen=True)
class SyntheticSpec:
    n_pattern_classes: int = 8
    seq_length: int = 24
    motif_length: int = 4
    prompt_length: int = 8
    vocab_size: int = 64
    gen_length: int = 4
    gen_output_dim: int = 16
    n_train: int = 512
    n_heldout: int = 128
    seed: int = 0

    @property
    def band_size(self) -> int:
        return self.vocab_size // self.n_pattern_classes

    def validate(self) -> 'SyntheticSpec':
        if self.n_pattern_classes < 1:
            raise ConfigError("At least one pattern class is required", locator='data:n_pattern_classes')
        if self.n_pattern_classes > self.vocab_size:
            raise ConfigError("%d pattern classes exceed vocabulary size %d" % (self.n_pattern_classes,
                                                                               self.vocab_size),
                              locator='data:n_pattern_classes')
        if not (1 <= self.motif_length < self.seq_length):
            raise ConfigError("motif_length must be in [1, seq_length)", locator='data:motif_length')
        if not (1 <= self.prompt_length <= self.seq_length):
            raise ConfigError("prompt_length must be in [1, seq_length]", locator='data:prompt_length')
        if self.n_train < 1 or self.n_heldout < 1:
            raise ConfigError("Split sizes must be >= 1", locator='data:n_train')
        distinct = self.n_pattern_classes * float(self.band_size) ** self.motif_length
        if self.n_train + self.n_heldout > distinct:
            raise ConfigError("Only %d distinct sequences for %d requested samples" % (
                              distinct, self.n_train + self.n_heldout), locator='data:n_train')
        return self

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> 'SyntheticSpec':
        known = { f.name for f in fields(cls) }
        unknown = set(data) - known
        if unknown:
            raise ConfigError("Unknown data options: %s" % ', '.join(sorted(unknown)), locator='data')
        return cls(**data).validate()


@dataclass
class Split:
    tokens: np.ndarray
    classes: np.ndarray

    def __len__(self) -> int:
        return self.tokens.shape[0]


@dataclass
class Dataset:
    spec: SyntheticSpec
    # [C x gen_length x gen_output_dim]
    patterns: np.ndarray
    train: Split
    heldout: Split

    def split(self, name: str) -> Split:
        if name not in SPLITS:
            raise InputError("Unknown split '%s'" % name)
        return getattr(self, name)

    def prompts(self, split: str = 'train') -> np.ndarray:
        return self.split(split).tokens[:, :self.spec.prompt_length]

    def targets(self, split: str = 'train') -> np.ndarray:
        return self.patterns[self.split(split).classes]


def sample_hash(tokens: np.ndarray) -> str:
    return hashlib.sha1(np.ascontiguousarray(tokens, dtype=np.int64).tobytes()).hexdigest()


def next_token_mask(spec: SyntheticSpec, length: Optional[int] = None) -> np.ndarray:
    """ Input positions whose next token is determined by the prefix
    """
    length = length or spec.seq_length
    mask = np.zeros(length - 1, dtype=bool)
    # Input at position t predicts token t+1, which is a copy when t+1 >= motif_length
    mask[max(spec.motif_length - 1, 0):] = True
    return mask


def _draw_patterns(spec: SyntheticSpec, rng: np.random.Generator) -> np.ndarray:
    shape = (spec.n_pattern_classes, spec.gen_length, spec.gen_output_dim)
    while True:
        patterns = rng.standard_normal(shape)
        flat = patterns.reshape(spec.n_pattern_classes, -1)
        dist = np.linalg.norm(flat[:, None, :] - flat[None, :, :], axis=-1)
        off = dist[~np.eye(spec.n_pattern_classes, dtype=bool)]
        if off.size == 0 or off.min() > MIN_PATTERN_DISTANCE:
            return patterns


def gen_dataset(spec: SyntheticSpec) -> Dataset:
    """ Build the synthetic dataset, a pure function of the spec
    """
    spec.validate()
    rng = np.random.default_rng(spec.seed)
    patterns = _draw_patterns(spec, rng)

    total = spec.n_train + spec.n_heldout
    band = spec.band_size
    reps = -(-spec.seq_length // spec.motif_length)
    seen = set()
    tokens = np.zeros((total, spec.seq_length), dtype=np.int64)
    classes = np.zeros(total, dtype=np.int64)
    n = 0
    while n < total:
        c = int(rng.integers(spec.n_pattern_classes))
        motif = c * band + rng.integers(band, size=spec.motif_length)
        seq = np.tile(motif, reps)[:spec.seq_length]
        key = sample_hash(seq)
        if key in seen:
            continue
        seen.add(key)
        tokens[n] = seq
        classes[n] = c
        n += 1

    LOGGER.debug("Generated %d synthetic samples over %d classes", total, spec.n_pattern_classes)
    return Dataset(spec=spec,
                   patterns=patterns,
                   train=Split(tokens[:spec.n_train], classes[:spec.n_train]),
                   heldout=Split(tokens[spec.n_train:], classes[spec.n_train:]))


@dataclass
class CalibrationBatch:
    task: str
    # Understanding: full sequences; generation: prompts
    samples: np.ndarray
    classes: np.ndarray
    seed: int
    split: str = 'train'
    # Sampling steps for generation, None means the model default
    steps: Optional[int] = None
    id: str = field(default='')

    def __post_init__(self) -> None:
        if self.task not in TASKS:
            raise InputError("Unknown task '%s'" % self.task)
        if not self.id:
            self.id = '%s-%s-%d-%d' % (self.task, self.split, self.seed, self.count)

    @property
    def count(self) -> int:
        return self.samples.shape[0]

    def timestep_grid(self, default_steps: int) -> Tuple[float, ...]:
        if self.task != 'generation':
            return ()
        k = self.steps or default_steps
        return tuple(i / k for i in range(k))


def make_calibration(dataset: Dataset, task: str, count: int = 32, seed: int = 0,
                     split: str = 'train', steps: Optional[int] = None) -> CalibrationBatch:
    """ Seeded sample without replacement from one split, tagged by task
    """
    if task not in TASKS:
        raise InputError("Unknown task '%s'" % task)
    pool = dataset.split(split)
    if count < 1:
        raise InputError("Calibration count must be >= 1")
    if count > len(pool):
        raise InputError("Calibration count %d exceeds pool size %d" % (count, len(pool)))
    rng = np.random.default_rng(seed)
    index = np.sort(rng.choice(len(pool), size=count, replace=False))
    samples = pool.tokens[index] if task == 'understanding' else dataset.prompts(split)[index]
    return CalibrationBatch(task=task, samples=samples, classes=pool.classes[index], seed=seed,
                            split=split, steps=steps)
