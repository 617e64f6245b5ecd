"""Exception types shared across the toolkit.

All recoverable module errors derive from SwarcloneError so the CLI can
map them to exit code 1; plain ValueError is reserved for caller
contract violations (bad arguments, mismatched shapes).
"""


class SwarcloneError(Exception):
    """Base class for errors raised by swarclone modules."""


class FormatError(SwarcloneError):
    """A file does not parse as its declared format (malformed header)."""


class UnsupportedFormatError(SwarcloneError):
    """A file parses but uses an encoding we do not handle (e.g. 24-bit WAV)."""


class DegenerateInputError(SwarcloneError):
    """Input is structurally valid but too small/empty for the operation."""


class NumericalFaultError(SwarcloneError):
    """A non-finite value appeared where the computation requires finiteness."""


class ManifestError(SwarcloneError):
    """A corpus manifest is missing, empty, or fails the operation's preconditions."""

    def __init__(self, message, issues=None):
        super().__init__(message)
        self.issues = list(issues or [])


class AlignmentError(SwarcloneError):
    """A (mel, audio) pair cannot be aligned to frames x hop samples."""


class UnsupportedNumeralError(SwarcloneError):
    """A digit run denotes a number outside the supported cardinal range."""

    def __init__(self, token):
        super().__init__(f"numeral out of supported range (>= 10^9): {token!r}")
        self.token = token


class VocabularyError(SwarcloneError):
    """A character outside the synthesizer vocabulary was encountered."""

    def __init__(self, char, offset):
        super().__init__(f"out-of-vocabulary character {char!r} at offset {offset}")
        self.char = char
        self.offset = offset
