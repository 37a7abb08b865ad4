"""Exception taxonomy shared across the engine.

Three buckets, matching the CLI exit-code contract: bad runtime inputs
(InputError), bad configuration (ConfigError, exit 1 via diagnostics),
and I/O trouble (exit 2, plain OSError).
"""


class HapticSimError(Exception):
    """Base class for engine errors."""


class InputError(HapticSimError, ValueError):
    """A runtime input violated an operation precondition."""


class ConfigError(HapticSimError, ValueError):
    """A configuration value or file is invalid."""


class ProtocolError(HapticSimError, ValueError):
    """A wire message could not be decoded or is out of order."""
