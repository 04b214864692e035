#
# Copyright 2026 py-umc authors
#
# This Source Code Form is subject to the terms of the Mozilla Public
# License, v. 2.0. If a copy of the MPL was not distributed with this
# file, You can obtain one at http://mozilla.org/MPL/2.0/.
#
from .config import ModelConfig  # noqa F401
from .probe import ForwardProbe  # noqa F401
from .layers import MlpLayer, Attention, TransformerBlock  # noqa F401
from .unified import (UnifiedToyModel,  # noqa F401
                      UndOutput,
                      COMPONENTS,
                      UNDERSTANDING,
                      CONDITIONING,
                      forward_und,
                      forward_gen,
                      sample_gen,
                      timestep_features,
                      parameter_count,
                      activated_parameter_count)
