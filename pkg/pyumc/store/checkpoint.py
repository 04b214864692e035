#
# Copyright 2026 py-umc authors
#
# This Source Code Form is subject to the terms of the Mozilla Public
# License, v. 2.0. If a copy of the MPL was not distributed with this
# file, You can obtain one at http://mozilla.org/MPL/2.0/.
#
""" Models, datasets and traces as UMC1 artifacts
"""
import json
import hashlib
import logging

from pathlib import Path
from typing import Any, Optional, Tuple

from ..data import Dataset, Split, SyntheticSpec
from ..exceptions import FormatError
from ..model import ModelConfig, UnifiedToyModel
from ..trace import ActivationTrace
from .container import PathLike, read_container, write_container

LOGGER = logging.getLogger('UMCLOG')


def config_hash(config: Any) -> str:
    """ SHA-256 of the canonical JSON form
    """
    text = json.dumps(config, sort_keys=True, separators=(',', ':'))
    return hashlib.sha256(text.encode('utf-8')).hexdigest()


def _meta(kind: str, seed: int, chash: Optional[str], default_config: Any) -> dict:
    return {
        'kind': kind,
        'seed': int(seed),
        'config_hash': chash or config_hash(default_config),
    }


def _expect(meta: dict, kind: str, path: PathLike) -> None:
    if meta.get('kind') != kind:
        raise FormatError("%s is a '%s' artifact, expected '%s'" % (path, meta.get('kind'), kind))


#
# Models
#

def save(model: UnifiedToyModel, path: PathLike, chash: Optional[str] = None) -> Path:
    """ Write a self-describing model checkpoint
    """
    meta = _meta('model', model.config.seed, chash, model.config.to_dict())
    meta.update({
        'model_config': model.config.to_dict(),
        'structure': model.describe(),
        'plans': list(model.plans),
        'partitions': list(model.partitions),
        'moe': { 'setup': model.moe_setup, 'modes': dict(model.moe_modes) },
        'stage_history': list(model.stage_history),
    })
    path = write_container(path, model.state_dict(), meta)
    LOGGER.info("Saved model checkpoint %s", path)
    return path


def _model(arrays: dict, meta: dict) -> UnifiedToyModel:
    model = UnifiedToyModel.from_structure(ModelConfig.from_dict(meta['model_config']), meta['structure'])
    model.load_state_dict(arrays)
    model.plans = list(meta['plans'])
    model.partitions = list(meta['partitions'])
    model.stage_history = list(meta['stage_history'])
    return model


def load_with_meta(path: PathLike) -> Tuple[UnifiedToyModel, dict]:
    arrays, meta = read_container(path)
    _expect(meta, 'model', path)
    return _model(arrays, meta), meta


def load(path: PathLike) -> UnifiedToyModel:
    return load_with_meta(path)[0]


#
# Datasets
#

def save_dataset(dataset: Dataset, path: PathLike, chash: Optional[str] = None) -> Path:
    arrays = {
        'patterns': dataset.patterns,
        'train.tokens': dataset.train.tokens,
        'train.classes': dataset.train.classes,
        'heldout.tokens': dataset.heldout.tokens,
        'heldout.classes': dataset.heldout.classes,
    }
    meta = _meta('dataset', dataset.spec.seed, chash, dataset.spec.to_dict())
    meta['spec'] = dataset.spec.to_dict()
    return write_container(path, arrays, meta)


def load_dataset(path: PathLike) -> Dataset:
    arrays, meta = read_container(path)
    _expect(meta, 'dataset', path)
    return Dataset(spec=SyntheticSpec.from_dict(meta['spec']),
                   patterns=arrays['patterns'],
                   train=Split(arrays['train.tokens'], arrays['train.classes']),
                   heldout=Split(arrays['heldout.tokens'], arrays['heldout.classes']))


#
# Traces
#

def save_trace(trace: ActivationTrace, path: PathLike, seed: int = 0, chash: Optional[str] = None) -> Path:
    arrays, info = trace.to_arrays()
    meta = _meta('trace', seed, chash, info)
    meta['trace'] = info
    return write_container(path, arrays, meta)


def load_trace_with_meta(path: PathLike) -> Tuple[ActivationTrace, dict]:
    arrays, meta = read_container(path)
    _expect(meta, 'trace', path)
    return ActivationTrace.from_arrays(arrays, meta['trace']), meta


def load_trace(path: PathLike) -> ActivationTrace:
    return load_trace_with_meta(path)[0]
