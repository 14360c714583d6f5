"""Exception hierarchy shared by every module."""


class LaserVFLError(Exception):
    """Base class for all errors raised by this package."""


class InputError(LaserVFLError, ValueError):
    """An argument is outside its documented domain."""


class DimensionError(InputError):
    """Tensor shapes do not line up."""


class ContractError(LaserVFLError):
    """A caller broke a precondition (e.g. client not in its task set)."""


class UnavailableError(LaserVFLError):
    """A predictor cannot run because a required block is missing."""


class CapacityError(LaserVFLError):
    """Exact enumeration would exceed the configured guard."""


class ProtocolError(LaserVFLError):
    """The simulated message exchange was violated."""


class NumericalError(LaserVFLError):
    """A tensor holds NaN or Inf."""


class ParseError(InputError):
    """A CSV or config file is malformed; message carries the location."""


class ConfigError(InputError):
    """A run configuration is invalid; message names the field."""
