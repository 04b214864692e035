#
# Copyright 2026 py-umc authors
#
# This Source Code Form is subject to the terms of the Mozilla Public
# License, v. 2.0. If a copy of the MPL was not distributed with this
# file, You can obtain one at http://mozilla.org/MPL/2.0/.
#
""" Toy unified model configuration
"""
from dataclasses import dataclass, asdict, fields
from typing import Any, Dict

from ..exceptions import ConfigError


@dataclass(frozen=True)
class ModelConfig:
    vocab_size: int = 64
    d_model: int = 32
    mlp_expansion: int = 4
    n_layers_und: int = 8
    n_layers_gen: int = 8
    n_heads: int = 4
    gen_output_dim: int = 16
    gen_steps: int = 8
    # Number of rows of a generated target
    gen_length: int = 4
    max_len: int = 32
    timestep_features: int = 16
    norm_eps: float = 1e-6
    seed: int = 0

    @property
    def d_ff(self) -> int:
        return self.d_model * self.mlp_expansion

    @property
    def head_dim(self) -> int:
        return self.d_model // self.n_heads

    def validate(self) -> 'ModelConfig':
        if self.d_model % self.n_heads:
            raise ConfigError("d_model %s is not divisible by n_heads %s" % (self.d_model, self.n_heads),
                              locator='model:n_heads')
        for name in ('vocab_size', 'd_model', 'mlp_expansion', 'n_layers_und', 'n_layers_gen',
                     'n_heads', 'gen_output_dim', 'gen_length', 'max_len', 'timestep_features'):
            if getattr(self, name) < 2:
                raise ConfigError("%s must be >= 2" % name, locator='model:%s' % name)
        if self.gen_steps < 1:
            raise ConfigError("gen_steps must be >= 1", locator='model:gen_steps')
        if self.timestep_features % 2:
            raise ConfigError("timestep_features must be even", locator='model:timestep_features')
        return self

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> 'ModelConfig':
        known = { f.name for f in fields(cls) }
        unknown = set(data) - known
        if unknown:
            raise ConfigError("Unknown model options: %s" % ', '.join(sorted(unknown)), locator='model')
        return cls(**data).validate()
