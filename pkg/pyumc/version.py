#
# Copyright 2026 py-umc authors
#
# This Source Code Form is subject to the terms of the Mozilla Public
# License, v. 2.0. If a copy of the MPL was not distributed with this
# file, You can obtain one at http://mozilla.org/MPL/2.0/.
#

import sys

def read_manifest() -> dict:
    from importlib import resources

    # Read build manifest
    manifest = { 'commitid':'n/a', 'buildid':'n/a', 'version':'n/a' }
    try:
        text = resources.files('pyumc').joinpath('build.manifest').read_text()
        manifest.update(line.strip().split('=')[:2] for line in text.splitlines() if '=' in line)
    except Exception as e:
        print("Failed to read manifest !: %s " % e, file=sys.stderr)

    return manifest

__manifest__ = read_manifest()

__version__    = __manifest__['version']
__description__="Calibration-driven compression of a toy unified multimodal model"
