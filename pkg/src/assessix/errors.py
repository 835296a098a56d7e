"""Exception types raised across the package."""


class AssessixError(Exception):
    """Base class for all package errors."""


class InvalidSpace(AssessixError, ValueError):
    pass


class NotMeasurable(AssessixError, ValueError):
    pass


class ZeroCellMass(AssessixError, ValueError):
    pass


class NotAPartition(AssessixError, ValueError):
    pass


class NotMonotone(AssessixError, ValueError):
    pass


class GridTooCoarse(AssessixError):
    pass


class AxiomViolation(AssessixError):
    pass


class EmptyDualGrid(AssessixError, ValueError):
    pass


class GridExhausted(AssessixError):
    """The optimizer sits on the boundary of the search grid."""


class NonMonotoneFamily(AssessixError):
    pass


class NotAdapted(AssessixError, ValueError):
    pass


class NotPredictable(AssessixError, ValueError):
    pass


class IdentityViolation(AssessixError):
    pass


class BracketFailure(AssessixError):
    pass


class NotIncreasing(AssessixError):
    pass


class SchemaError(AssessixError, ValueError):
    pass


class AdaptednessError(AssessixError, ValueError):
    pass


class UnknownIndex(AssessixError, KeyError):
    pass


class InvariantViolation(AssessixError, ValueError):
    """A dual object fails the invariants of its type."""


class NonMonotoneRefinement(AssessixError):
    """Refining a dual grid made the robust value worse."""
