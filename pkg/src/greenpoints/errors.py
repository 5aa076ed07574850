"""Exception types shared across the package."""


class GreenpointsError(Exception):
    """Base class for all package-specific errors."""


class UnsupportedPointOperation(GreenpointsError):
    """Raised for point-level operations on spaces with no coordinate model."""


class CutLocusError(GreenpointsError):
    """Raised when a log map is requested at the cut locus (distance = diameter)."""


class SingularityError(GreenpointsError):
    """Raised when a kernel is evaluated at coincident points."""


class MeshBuildError(GreenpointsError):
    """Raised when an input mesh is not a closed orientable triangle surface."""

    def __init__(self, message, offending=None):
        super().__init__(message)
        self.offending = offending if offending is not None else []


class ConvergenceError(GreenpointsError):
    """Raised when an iterative solver exhausts its budget.

    The residual history observed so far is attached for diagnostics.
    """

    def __init__(self, message, history=None):
        super().__init__(message)
        self.history = history if history is not None else []


class KernelBuildError(GreenpointsError):
    """Raised when kernel tabulation cannot reach the requested tolerance."""
