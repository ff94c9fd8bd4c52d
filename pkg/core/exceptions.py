class PeftLadError(Exception):
    """
    Base class for every failure raised by the package.

    `exit_code` is what a management command returns when the error escapes it.
    """

    exit_code = 2


class ConfigError(PeftLadError):
    """Invalid configuration value or combination of values."""


class InputError(PeftLadError):
    """Malformed caller input (labels, token ids, list lengths)."""


class DimensionError(PeftLadError):
    """Tensor shapes that cannot be combined."""


class NumericError(PeftLadError):
    """Non-finite values, rank-deficient matrices, failed gradient checks."""

    exit_code = 4


class LogParseError(PeftLadError):
    """A raw log line that does not fit its declared format."""


class GroupingError(PeftLadError):
    """An event that cannot be placed in a sequence."""


class EncodingError(PeftLadError):
    """Text that cannot be turned into token ids."""


class LoadError(PeftLadError):
    """A checkpoint or bundle that exists but is incomplete or inconsistent."""

    exit_code = 3


class MissingArtifactError(PeftLadError):
    """A required file or directory does not exist."""

    exit_code = 3
