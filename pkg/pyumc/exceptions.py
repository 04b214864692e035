#
# Copyright 2026 py-umc authors
#
# This Source Code Form is subject to the terms of the Mozilla Public
# License, v. 2.0. If a copy of the MPL was not distributed with this
# file, You can obtain one at http://mozilla.org/MPL/2.0/.
#

"""
Compression toolkit exceptions

Every failure raised by the toolkit derives from CompressionError,
the `exit_code` attribute is used by the command line.
"""

import logging

LOGGER = logging.getLogger('UMCLOG')


class CompressionError(Exception):
    """ Base exception class
    """

    exit_code = 1

    def __init__(self, description: str = "", locator: str = "") -> None:
        self.description = description
        self.locator = locator
        msg = 'Exception: %s, description: %s, locator: %s' % (self.name, self.description, self.locator)
        LOGGER.debug(msg)
        super().__init__(description)

    @property
    def name(self) -> str:
        """The exception name."""
        return self.__class__.__name__


class DimensionError(CompressionError):
    """ Incompatible tensor shapes
    """
    pass


class ContractError(CompressionError):
    """ Violated precondition or topology mismatch
    """
    pass


class InputError(CompressionError):
    """ Invalid runtime input
    """
    pass


class ConfigError(CompressionError):
    """ Invalid configuration
    """
    pass


class DegenerateInputError(CompressionError):
    """ Input for which the result is undefined
    """
    pass


class FormatError(CompressionError):
    """ Unreadable artifact
    """
    pass


class IntegrityError(CompressionError):
    """ Artifact content does not match its header
    """
    pass


class DivergenceError(CompressionError):
    """ Non finite loss during optimization
    """
    pass


class UsageError(CompressionError):
    """ Command line misuse
    """
    exit_code = 2
