"""Exception hierarchy shared across the package."""


class MastError(Exception):
    """Base class for all mastlab errors."""


class DimensionError(MastError):
    """Shapes or extents are incompatible with the requested operation."""


class DomainError(MastError):
    """A value lies outside the mathematical domain of the operation."""


class ContractError(MastError):
    """A caller violated an API precondition."""


class DataFormatError(MastError):
    """A dataset or checkpoint file is malformed; message names the record."""


class ConfigError(MastError):
    """A configuration file or override is invalid; message names the field."""


class TrainingDiverged(MastError):
    """The training loss became non-finite; diagnostics were dumped."""
