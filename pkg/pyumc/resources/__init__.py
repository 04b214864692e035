#
# Copyright 2026 py-umc authors
#
# This Source Code Form is subject to the terms of the Mozilla Public
# License, v. 2.0. If a copy of the MPL was not distributed with this
# file, You can obtain one at http://mozilla.org/MPL/2.0/.
#
""" Package resources
"""
import json

from functools import lru_cache
from importlib import resources


@lru_cache(maxsize=None)
def load_schema(name: str) -> dict:
    """ Load a JSON schema shipped with the package
    """
    text = resources.files('pyumc.resources').joinpath('schemas', '%s.json' % name).read_text()
    return json.loads(text)
