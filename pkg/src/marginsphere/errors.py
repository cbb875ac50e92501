"""Exception types shared across the package."""


class MarginSphereError(Exception):
    """Base class for all package errors."""


class ShapeError(MarginSphereError):
    """Array dimensions do not chain or do not match the network."""


class NumericError(MarginSphereError):
    """A loss term or gradient became non-finite."""


class DomainError(MarginSphereError):
    """A scalar argument is outside its admissible range."""


class InvalidBatchError(MarginSphereError):
    """A batch lacks the rows a loss requires (e.g. no normal samples)."""


class NuBoundError(DomainError):
    """A (nu, nu1, nu2) combination violates the admissibility bounds."""


class ConstraintError(MarginSphereError):
    """A precondition on the final-layer constraint ||w||^2 = 4 is violated."""


class DivergenceError(MarginSphereError):
    """Training produced a non-finite loss."""

    def __init__(self, epoch, message):
        super().__init__(f"epoch {epoch}: {message}")
        self.epoch = epoch


class ConfigError(MarginSphereError):
    """A run configuration file could not be parsed or validated."""
