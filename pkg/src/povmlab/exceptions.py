"""Exception types shared across the package."""


class PovmLabError(Exception):
    """Base class for all package errors."""


class DimensionMismatch(PovmLabError):
    """Operands act on different Hilbert-space dimensions."""


class ShapeMismatch(PovmLabError):
    """Array has the wrong shape for the requested operation."""


class InvalidState(PovmLabError):
    """State vector fails normalization or shape checks."""


class InvalidProbability(PovmLabError):
    """Probabilities are negative or do not sum to one."""


class CapExceeded(PovmLabError):
    """A dimension, outcome-count, or memory guard was exceeded."""


class BadWeights(PovmLabError):
    """Rank-one element weights are inconsistent with completeness."""


class AlignmentError(PovmLabError):
    """Outcome set cannot be aligned with the kernel's guess set."""


class IndexOutOfRange(PovmLabError, IndexError):
    """Outcome or slot index outside the measurement's range."""


class NonConvergence(PovmLabError):
    """Optimizer failed to reach the requested stationarity residual.

    Carries the best iterate found so callers can still inspect it.
    """

    def __init__(self, message, best_povm=None, best_certificate=None):
        super().__init__(message)
        self.best_povm = best_povm
        self.best_certificate = best_certificate


class DecompositionFailure(PovmLabError):
    """An eigendecomposition or matrix square root could not be completed."""


class ConfigError(PovmLabError):
    """Run configuration is malformed or incomplete."""


class EntropyBoundExceeded(PovmLabError):
    """Realized output entropy exceeded its counting bound."""


class UnknownDemo(PovmLabError):
    """Demo name is not one of the built-in demos."""
