"""Exception types shared across the package."""


class ParameterError(ValueError):
    """Invalid model or solver parameter."""


class RegimeError(RuntimeError):
    """Requested quantity needs the metastable regime (or defined grid roots)."""


class InsufficientDataError(RuntimeError):
    """Not enough completed replicas / sweep points for a fit."""

    def __init__(self, message, counts=None):
        super().__init__(message)
        self.counts = dict(counts or {})
