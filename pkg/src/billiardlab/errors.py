"""Exception types shared across the package."""


class BilliardError(Exception):
    """Base class for all billiardlab errors."""


class InvalidGeometry(BilliardError):
    """Domain specification violates a geometric invariant."""


class ResolutionTooCoarse(BilliardError):
    """Grid too coarse to resolve an obstacle or slit."""


class EmptyRegion(BilliardError):
    """A region mask selected no grid nodes."""


class ConvergenceFailure(BilliardError):
    """Eigensolver hit its iteration cap without converging."""


class ShiftBreakdown(BilliardError):
    """Shifted factorization was singular even after a perturbed retry."""


class ResonantMode(BilliardError):
    """1D mode operator is singular at the requested spectral parameter."""

    def __init__(self, message: str, kernel_index: int | None = None):
        super().__init__(message)
        self.kernel_index = kernel_index


class DegenerateStart(BilliardError):
    """Trajectory starts inside an obstacle, on a slit, or hits a slit endpoint."""


class TrajectoryHitsObstacle(BilliardError):
    """The requested periodic trajectory intersects the obstacle."""


class NotXBounded(BilliardError):
    """Operation requires an x-bounded trajectory."""


class IterationCapExceeded(BilliardError):
    """Unfolding iteration cap reached before the plan closed."""


class PlanMismatch(BilliardError):
    """Grid or slit geometry is misaligned with an unfolding plan."""


class GammaNotOnGrid(BilliardError):
    """Translation vector is not a whole number of grid cells."""


class PhaseGridTooCoarse(BilliardError):
    """Phase-space grid does not resolve the coherent-state width."""


class ConfigError(BilliardError):
    """Run configuration is missing keys or has invalid values."""
