"""Exception types shared across the package."""


class OutOfCubeError(ValueError):
    """A point lies outside the sampling cube [-1, 1)^d."""


class RegionBoundaryError(ValueError):
    """A point is too close to a region, activation, or clip boundary."""


class SlabOverlapError(ValueError):
    """Magnitudes are too small for the slab decomposition of the energy."""


class UnstableStepError(ValueError):
    """A gradient-descent step size violates the stability bound."""


class BudgetExceededError(RuntimeError):
    """A lattice enumeration or shell table would exceed its budget."""


class BesselEvaluationError(ArithmeticError):
    """The Bessel function could not be evaluated to working accuracy."""
