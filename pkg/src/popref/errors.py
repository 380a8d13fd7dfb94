"""Exception types shared across the toolkit.

The CLI maps these onto process exit codes: usage problems exit with 1,
data/contract problems with 2, numeric failures with 3.
"""


class PopRefError(Exception):
    """Base class for all toolkit errors."""


class ContractViolation(PopRefError):
    """An operation was called with arguments violating its preconditions."""


class ConfigError(PopRefError):
    """A configuration value is outside its legal range."""


class ParseError(PopRefError):
    """A data file does not conform to its declared format."""

    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class EncodingError(PopRefError):
    """A token or image id has no vector in the active vocabulary."""


class GenerationError(PopRefError):
    """Sampling constraints could not be satisfied within the retry budget."""


class ValidationError(PopRefError):
    """A reference act violates its gold-consistency invariants."""


class UnsupportedInputError(PopRefError):
    """A predictor was fed a task variant it does not handle."""


class NumericError(PopRefError):
    """Training or gradient checking produced non-finite or inconsistent numbers."""
