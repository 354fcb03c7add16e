"""Exception hierarchy shared by every module of the package."""


class IntercutsError(Exception):
    """Base class for all errors raised by this package."""


class ParseError(IntercutsError):
    def __init__(self, message, position=None):
        self.position = position
        if position is not None:
            message = f"{message} (at position {position})"
        super().__init__(message)


class EvaluationError(IntercutsError):
    """An expression produced NaN, e.g. from inf - inf."""


class FDGradientError(IntercutsError):
    """A finite-difference stencil touched an infinite value."""


class MinMaxNotDifferentiable(IntercutsError):
    pass


class AtomUndefined(IntercutsError):
    """No estimator rule exists for a univariate function at the given value."""


class ApexNotInterior(IntercutsError):
    pass


class AllRaysUnbounded(IntercutsError):
    pass


class EmptyZRegion(IntercutsError):
    pass


class UnsupportedDimension(IntercutsError):
    pass


class EmptyBoundary(IntercutsError):
    pass


class EmptyAfterRedundancyFilter(IntercutsError):
    pass


class InvalidConfig(IntercutsError):
    pass


class Infeasible(IntercutsError):
    pass


class Unbounded(IntercutsError):
    pass


class RankDeficient(IntercutsError):
    pass


class UnboundedMesh(IntercutsError):
    pass


class DimensionTooHigh(IntercutsError):
    pass
