#
# Copyright 2026 py-umc authors
#
# This Source Code Form is subject to the terms of the Mozilla Public
# License, v. 2.0. If a copy of the MPL was not distributed with this
# file, You can obtain one at http://mozilla.org/MPL/2.0/.
#
""" Minimal dense tensor algebra with reverse-mode gradients
"""
from .tensor import (Tensor,  # noqa F401
                     GradientTape,
                     backward,
                     precision,
                     default_dtype,
                     active_tape)
from .ops import (as_tensor,  # noqa F401
                  add, sub, mul, scale,
                  silu,
                  matmul,
                  transpose,
                  reshape,
                  embedding,
                  sum, mean,
                  rms_norm,
                  softmax,
                  cross_entropy,
                  mse,
                  cosine_similarity,
                  rowwise_cosine,
                  zeros)
