"""Exception types shared across the package.

Validation problems (bad input, bad config) derive from ``ValidationError``;
the CLI maps those to exit status 1 and everything else to 2.
"""


class ValidationError(ValueError):
    pass


class ParseError(ValidationError):
    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class EmptyMeshError(ValidationError):
    pass


class NoObjectError(ValidationError):
    pass


class ManifestError(ValidationError):
    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"manifest line {line}: {message}"
        super().__init__(message)


class InsufficientDataError(ValidationError):
    pass


class WeightFileError(ValidationError):
    def __init__(self, message, layer=None):
        self.layer = layer
        if layer is not None:
            message = f"layer {layer}: {message}"
        super().__init__(message)


class TruncatedBlobError(WeightFileError):
    pass


class ShapeMismatchError(WeightFileError):
    pass


class UnknownLayerError(WeightFileError):
    pass


class DivergenceError(RuntimeError):
    pass
