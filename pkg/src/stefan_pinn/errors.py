"""Exception types shared across the package."""


class StefanPinnError(Exception):
    """Base class for all package-specific failures."""


class NoRootBracket(StefanPinnError):
    """The transcendental interface equation has no sign change on the search bracket."""


class NewtonDiverged(StefanPinnError):
    """Newton iteration exceeded its iteration cap without meeting tolerance."""


class SingularJacobian(StefanPinnError):
    """A pivot in the tridiagonal elimination fell below the singularity threshold."""


class NonIntegerStages(StefanPinnError):
    """The time window does not split into a whole number of curriculum stages."""


class NanLoss(StefanPinnError):
    """A loss term became non-finite during training."""

    def __init__(self, iteration, message=None):
        self.iteration = iteration
        super().__init__(message or f"non-finite loss at iteration {iteration}")


class ZeroReference(StefanPinnError):
    """The reference field has zero norm, so a relative error is undefined."""
