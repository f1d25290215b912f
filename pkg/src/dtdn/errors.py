"""Exception hierarchy shared by every module."""


class DTDNError(Exception):
    """Base class for all package errors."""


class ShapeError(DTDNError, ValueError):
    pass


class FormatError(DTDNError, ValueError):
    """Malformed or corrupt serialized data (PPM headers, checkpoints)."""


class ParameterError(DTDNError, ValueError):
    """Invalid hyperparameter or configuration value."""


class DataError(DTDNError):
    """A dataset violates a data contract (empty heavy subset, missing files)."""


class ContractError(DTDNError):
    """A caller broke an operation precondition."""


class LengthError(FormatError):
    """Payload shorter or longer than its header declares."""
