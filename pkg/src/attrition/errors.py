"""Exception types shared across the package."""


class AttritionError(Exception):
    """Base class for all package-specific errors."""


class InvalidParameter(AttritionError, ValueError):
    """A parameter is outside its documented range."""


class NonMonotonePrize(AttritionError, ValueError):
    """Prize values are not positive and strictly increasing."""


class DomainError(AttritionError, ValueError):
    """Argument lies outside the function's domain."""


class DegenerateRates(AttritionError):
    """Rates too close together for the partial-fraction closed forms."""


class NumericalInstability(AttritionError):
    """A closed-form evaluation lost too much precision to be trusted."""


class StepTooLarge(AttritionError):
    """ODE step produced a decreasing or overshooting solution."""


class TailNotConverged(AttritionError):
    """Truncated improper integral still has a tail above tolerance."""


class InvalidCdf(AttritionError, ValueError):
    """Supplied function is not a valid cumulative distribution."""


class MismatchedAtZero(AttritionError, ValueError):
    """Strategy families do not have equal densities at zero."""


class SingularDerivative(AttritionError):
    """Prize derivative vanishes where its reciprocal is needed."""
