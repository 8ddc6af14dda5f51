"""Exception types shared across the package.

CLI exit codes: ConfigError -> 1, DataError -> 2, NumericError -> 3.
"""


class FlexcastError(Exception):
    pass


class DimensionError(FlexcastError):
    """Tensor shapes or axes violate an operation's contract."""


class ConfigError(FlexcastError):
    """Invalid or inconsistent configuration."""


class DataError(FlexcastError):
    """Malformed or inconsistent input data."""


class StoreIntegrityError(DataError):
    """A persisted record failed its checksum or framing checks."""


class FormatError(DataError):
    """Unknown container/checkpoint format or version."""


class TransferError(ConfigError):
    """Source checkpoint is incompatible with the target configuration."""


class NumericError(FlexcastError):
    """Non-finite values encountered where finite values are required."""
