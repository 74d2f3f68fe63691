"""Exception types shared across the package."""


class BLNMError(Exception):
    """Base class for all package errors."""


class ValidationError(BLNMError, ValueError):
    """Invalid argument, configuration or data."""


class StructuralError(BLNMError, ValueError):
    """Weights do not match the architecture they are used with."""


class NumericFault(BLNMError, FloatingPointError):
    """Non-finite values encountered; ``block`` names where."""

    def __init__(self, message, block=None):
        super().__init__(message)
        self.block = block


class ParseError(ValidationError):
    """Malformed dataset or model file; carries file and line when known."""

    def __init__(self, message, path=None, line=None):
        loc = ""
        if path is not None:
            loc = f"{path}"
            if line is not None:
                loc += f":{line}"
            loc += ": "
        super().__init__(loc + message)
        self.path = path
        self.line = line
