#
# Copyright 2026 py-umc authors
#
# This Source Code Form is subject to the terms of the Mozilla Public
# License, v. 2.0. If a copy of the MPL was not distributed with this
# file, You can obtain one at http://mozilla.org/MPL/2.0/.
#
""" Pipeline configuration

    A YAML document validated against the `pipeline` schema. Section
    seeds default to the global seed, loading then dumping a
    configuration is lossless.
"""
import logging

import yaml
import jsonschema

from dataclasses import dataclass, asdict, field
from pathlib import Path
from typing import Any, Dict, List, Optional

from ..data import SyntheticSpec
from ..exceptions import ConfigError
from ..model import ModelConfig
from ..train import TrainConfig
from ..resources import load_schema
from .checkpoint import config_hash
from .container import PathLike

LOGGER = logging.getLogger('UMCLOG')


@dataclass(frozen=True)
class CalibrationSpec:
    id: str
    task: str
    count: int = 32
    seed: int = 0
    split: str = 'train'
    granularity: str = 'block'
    steps: Optional[int] = None


@dataclass(frozen=True)
class PruningSpec:
    kind: str = 'width'
    component: str = 'und'
    ratio: Optional[float] = 0.5
    # Number of (sub)layers for depth pruning
    count: Optional[int] = None
    granularity: str = 'block'
    calibration: Optional[str] = None
    protected: Optional[List[List]] = None


@dataclass(frozen=True)
class MoESpec:
    experts: int = 16
    k: Optional[int] = None
    ratio: float = 0.5
    setup: str = 'gen'
    shared: bool = True
    calibration: Optional[str] = None


@dataclass
class PipelineConfig:
    seed: int = 0
    output: str = 'pipeline'
    model: ModelConfig = field(default_factory=ModelConfig)
    data: SyntheticSpec = field(default_factory=SyntheticSpec)
    calibration: List[CalibrationSpec] = field(default_factory=list)
    pruning: Optional[PruningSpec] = None
    moe: Optional[MoESpec] = None
    training: Dict[str, TrainConfig] = field(default_factory=dict)

    @classmethod
    def from_dict(cls, doc: Dict[str, Any]) -> 'PipelineConfig':
        doc = doc or {}
        try:
            jsonschema.validate(doc, load_schema('pipeline'))
        except jsonschema.ValidationError as exc:
            locator = ':'.join(str(p) for p in exc.absolute_path)
            raise ConfigError("Invalid pipeline configuration: %s" % exc.message, locator=locator) from None

        seed = doc.get('seed', 0)

        def seeded(section: Dict[str, Any]) -> Dict[str, Any]:
            return dict({ 'seed': seed }, **section)

        try:
            config = cls(seed=seed,
                         output=doc.get('output', 'pipeline'),
                         model=ModelConfig.from_dict(seeded(doc.get('model', {}))),
                         data=SyntheticSpec.from_dict(seeded(doc.get('data', {}))),
                         calibration=[CalibrationSpec(**seeded(c)) for c in doc.get('calibration', [])],
                         pruning=PruningSpec(**doc['pruning']) if doc.get('pruning') is not None else None,
                         moe=MoESpec(**doc['moe']) if doc.get('moe') is not None else None,
                         training={ stage: TrainConfig.from_dict(dict(seeded(opts), stage=stage))
                                    for stage, opts in doc.get('training', {}).items() })
        except TypeError as exc:
            raise ConfigError("Invalid pipeline configuration: %s" % exc) from None
        return config.validate()

    def validate(self) -> 'PipelineConfig':
        ids = [c.id for c in self.calibration]
        duplicates = sorted({ i for i in ids if ids.count(i) > 1 })
        if duplicates:
            raise ConfigError("Duplicate calibration ids: %s" % ', '.join(duplicates), locator='calibration')
        for section, ref in (('pruning', self.pruning), ('moe', self.moe)):
            if ref is not None and ref.calibration is not None and ref.calibration not in ids:
                raise ConfigError("Unresolved calibration reference '%s'" % ref.calibration,
                                  locator='%s:calibration' % section)
        m, d = self.model, self.data
        if m.vocab_size != d.vocab_size:
            raise ConfigError("model.vocab_size %d != data.vocab_size %d" % (m.vocab_size, d.vocab_size),
                              locator='data:vocab_size')
        if (m.gen_length, m.gen_output_dim) != (d.gen_length, d.gen_output_dim):
            raise ConfigError("Generation target shape differs between model and data", locator='data')
        if m.max_len < d.seq_length:
            raise ConfigError("model.max_len %d < data.seq_length %d" % (m.max_len, d.seq_length),
                              locator='model:max_len')
        return self

    def calibration_spec(self, ident: str) -> CalibrationSpec:
        for c in self.calibration:
            if c.id == ident:
                return c
        raise ConfigError("Unresolved calibration reference '%s'" % ident, locator='calibration')

    def calibration_for(self, task: str, ident: Optional[str] = None) -> Optional[CalibrationSpec]:
        """ The referenced calibration, or the first one of `task`
        """
        if ident is not None:
            return self.calibration_spec(ident)
        return next((c for c in self.calibration if c.task == task), None)

    def train_config(self, stage: str, **overrides) -> TrainConfig:
        base = self.training.get(stage)
        data = base.to_dict() if base else { 'stage': stage, 'seed': self.seed }
        data.update({ k: v for k, v in overrides.items() if v is not None })
        return TrainConfig.from_dict(data)

    def to_dict(self) -> Dict[str, Any]:
        doc = {
            'seed': self.seed,
            'output': self.output,
            'model': self.model.to_dict(),
            'data': self.data.to_dict(),
            'calibration': [asdict(c) for c in self.calibration],
            'training': { stage: { k: v for k, v in tc.to_dict().items() if k != 'stage' }
                          for stage, tc in self.training.items() },
        }
        if self.pruning is not None:
            doc['pruning'] = asdict(self.pruning)
        if self.moe is not None:
            doc['moe'] = asdict(self.moe)
        return doc

    @property
    def config_hash(self) -> str:
        return config_hash(self.to_dict())


def load_pipeline(path: PathLike) -> PipelineConfig:
    path = Path(path)
    try:
        with path.open('r') as f:
            doc = yaml.load(f, yaml.SafeLoader)
    except yaml.YAMLError as exc:
        raise ConfigError("Cannot parse %s: %s" % (path, exc)) from None
    config = PipelineConfig.from_dict(doc)
    LOGGER.info("Loaded pipeline %s (hash %s)", path, config.config_hash[:12])
    return config


def dump_pipeline(config: PipelineConfig, path: PathLike) -> Path:
    path = Path(path)
    with path.open('w') as f:
        yaml.safe_dump(config.to_dict(), f, sort_keys=True)
    return path
