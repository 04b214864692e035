#
# Copyright 2026 py-umc authors
#
# This Source Code Form is subject to the terms of the Mozilla Public
# License, v. 2.0. If a copy of the MPL was not distributed with this
# file, You can obtain one at http://mozilla.org/MPL/2.0/.
#
""" Forward pass observation hooks

    Hooks receive read-only numpy views of batched activations
    (batch axis first) and must never modify them.
"""
import numpy as np


class ForwardProbe:
    """ No-op probe, override the hooks you need
    """

    def timestep(self, t: float) -> None:
        """ Called by the sampler before each generation forward pass
        """

    def block(self, component: str, layer: int, x: np.ndarray, y: np.ndarray) -> None:
        """ Input and output of a whole block
        """

    def sublayer(self, component: str, layer: int, kind: str, x: np.ndarray, y: np.ndarray) -> None:
        """ Input and output of a residual sublayer ('attn', 'xattn' or 'mlp')
        """

    def mlp_hidden(self, component: str, layer: int, h: np.ndarray) -> None:
        """ Hidden activations of a dense MLP, shape [B, T, dm]
        """

    def heads(self, component: str, layer: int, a: np.ndarray) -> None:
        """ Per head outputs before the output projection, shape [B, H, T, hd]
        """

    def router(self, component: str, layer: int, scores, selected: np.ndarray) -> None:
        """ Router scores (a Tensor, [N, n_routed]) and the 0/1 selection mask
        """
