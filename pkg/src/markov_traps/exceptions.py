class EncodingError(ValueError):
    """A state does not belong to (or cannot be encoded for) a chain."""


class SolverError(RuntimeError):
    """A truncated linear system has no unique solution."""


class ConvergenceError(RuntimeError):
    """Fixed-point iteration hit its sweep cap before converging."""

    def __init__(self, message, residual=None, sweeps=None):
        super().__init__(message)
        self.residual = residual
        self.sweeps = sweeps


class DensityError(ValueError):
    """Density of an empty annulus was requested."""


class ConfigError(ValueError):
    """Experiment configuration failed validation.

    ``errors`` is a list of ``{"field": ..., "message": ...}`` records.
    """

    def __init__(self, errors):
        self.errors = list(errors)
        super().__init__("; ".join(f"{e['field']}: {e['message']}" for e in self.errors))
