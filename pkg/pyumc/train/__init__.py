#
# Copyright 2026 py-umc authors
#
# This Source Code Form is subject to the terms of the Mozilla Public
# License, v. 2.0. If a copy of the MPL was not distributed with this
# file, You can obtain one at http://mozilla.org/MPL/2.0/.
#
from .optim import AdamW, STAGES, frozen_parameters, check_stage, is_expert_parameter  # noqa F401
from .loops import TrainConfig, TrainResult, LossPoint, train, pretrain, tune, joint_loss  # noqa F401
from .evaluate import EvalResult, evaluate, nearest_pattern  # noqa F401
