#
# Copyright 2026 py-umc authors
#
# This Source Code Form is subject to the terms of the Mozilla Public
# License, v. 2.0. If a copy of the MPL was not distributed with this
# file, You can obtain one at http://mozilla.org/MPL/2.0/.
#
from .container import MAGIC, VERSION, read_container, write_container, read_meta  # noqa F401
from .checkpoint import (save,  # noqa F401
                         load,
                         load_with_meta,
                         save_dataset,
                         load_dataset,
                         save_trace,
                         load_trace,
                         load_trace_with_meta,
                         config_hash)
from .pipeline import PipelineConfig, CalibrationSpec, PruningSpec, MoESpec, load_pipeline, dump_pipeline  # noqa F401
