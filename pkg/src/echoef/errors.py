"""Exception types shared across the package.

All echoef-specific failures derive from :class:`EchoefError` so callers
(CLI included) can distinguish configuration/input mistakes from genuine
runtime faults.
"""


class EchoefError(Exception):
    """Base class for all echoef errors."""


class InvalidConfigError(EchoefError):
    """A configuration value or combination of values is not allowed."""


class InvalidInputError(EchoefError):
    """A runtime argument violates a documented precondition."""


class InvalidLabelError(InvalidInputError):
    """An EF label lies outside the representable range."""


class UnsupportedOperationError(EchoefError):
    """The requested operation is not defined for this model variant."""


class FormatError(EchoefError):
    """A persisted file is malformed. Carries the byte offset of the fault."""

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (byte offset {offset})")
        self.offset = offset


class TrainingDivergedError(EchoefError):
    """Training hit a non-finite loss; a diagnostic dump was written."""

    def __init__(self, message: str, dump_path: str | None = None):
        super().__init__(message)
        self.dump_path = dump_path
