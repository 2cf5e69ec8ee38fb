"""Exception hierarchy shared by every wowflow module."""


class WowError(Exception):
    """Base class for all library errors."""


class DimensionMismatch(WowError, ValueError):
    pass


class InvalidWeights(WowError, ValueError):
    pass


class ShapeMismatch(WowError, ValueError):
    pass


class LengthMismatch(WowError, ValueError):
    pass


class SizeMismatch(WowError, ValueError):
    pass


class SizeLimitExceeded(WowError, ValueError):
    pass


class NonFiniteGradient(WowError, FloatingPointError):
    def __init__(self, message, iteration=None):
        super().__init__(message)
        self.iteration = iteration


class DegenerateRow(WowError, FloatingPointError):
    def __init__(self, message, row=None, iteration=None):
        super().__init__(message)
        self.row = row
        self.iteration = iteration


class ParseError(WowError, ValueError):
    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class RaggedClasses(WowError, ValueError):
    def __init__(self, counts):
        desc = ", ".join(f"{k}: {v}" for k, v in counts.items())
        super().__init__(f"classes have unequal point counts ({desc})")
        self.counts = dict(counts)


class BadMagic(WowError, ValueError):
    pass


class TruncatedFile(WowError, ValueError):
    pass


class CountMismatch(WowError, ValueError):
    pass


class MalformedRecord(WowError, ValueError):
    def __init__(self, message, offset=None):
        if offset is not None:
            message = f"byte offset {offset}: {message}"
        super().__init__(message)
        self.offset = offset
