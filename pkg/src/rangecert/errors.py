"""Exception hierarchy."""


class RangeCertError(Exception):
    """Base class for all library errors."""


class DimensionMismatch(RangeCertError, ValueError):
    pass


class NonHermitian(RangeCertError, ValueError):
    pass


class NotSelfAdjoint(RangeCertError, ValueError):
    pass


class IncompatibleShapes(RangeCertError, ValueError):
    pass


class UnsupportedComposition(RangeCertError):
    """The product is mathematically defined but not representable exactly;
    callers fall back to truncation-only analysis or user-supplied bounds."""


class NotCompactWitness(RangeCertError, ValueError):
    pass


class HypothesisViolated(RangeCertError):
    def __init__(self, message, label=None):
        super().__init__(message)
        self.label = label


class MissingOverride(RangeCertError):
    def __init__(self, message, pair=None):
        super().__init__(message)
        self.pair = pair


class TruncationUnavailable(RangeCertError):
    def __init__(self, message, label=None):
        super().__init__(message)
        self.label = label


class PartitionMismatch(RangeCertError, ValueError):
    pass


class SchemaError(RangeCertError, ValueError):
    def __init__(self, message, line=None, path=None):
        super().__init__(message)
        self.line = line
        self.path = path
