"""Exception types shared across the package."""


class CdchError(Exception):
    """Base class for all package errors."""


class InvalidSpec(CdchError, ValueError):
    """A domain specification violates its invariants."""


class InvalidParams(CdchError, ValueError):
    """Parameters outside the admissible range of an operation."""


class EmptyInterior(CdchError):
    """Rasterization produced no interior node at the requested resolution."""


class EllipticityViolation(CdchError):
    """A coefficient field fails its declared ellipticity envelope."""


class NoConvergence(CdchError):
    """An iterative solver exhausted its iteration budget."""

    def __init__(self, message, residual=None, iterations=None):
        super().__init__(message)
        self.residual = residual
        self.iterations = iterations


class DegenerateCondenser(CdchError):
    """A condenser rasterizes to an empty compact set or no free nodes."""


class UnderResolved(CdchError):
    """A grid does not resolve the requested oscillation period."""
