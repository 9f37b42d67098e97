"""Exception hierarchy."""


class OTNGError(Exception):
    pass


class GraphError(OTNGError, ValueError):
    pass


class DisconnectedGraph(GraphError):
    pass


class BoundaryPoint(OTNGError, ValueError):
    """A point is too close to the simplex boundary for L(p)^+ to be used."""


class BoundaryEscape(OTNGError):
    """An integrated trajectory left the interior of the simplex."""

    def __init__(self, message, t=None, state=None):
        super().__init__(message)
        self.t = t
        self.state = state


class DomainEscape(OTNGError):
    """An iterate left the parameter domain of a model."""

    def __init__(self, message, theta=None):
        super().__init__(message)
        self.theta = theta


class NonConvergence(OTNGError):
    """An iterative solver stopped before reaching its tolerance.

    ``last`` carries the last accepted iterate (whatever the solver returns
    on success) so callers can still inspect it.
    """

    def __init__(self, message, last=None):
        super().__init__(message)
        self.last = last


class InnerNonConvergence(NonConvergence):
    pass


class MaxItersExceeded(NonConvergence):
    pass


class RankDeficient(OTNGError, ValueError):
    pass


class SingularMetric(OTNGError):
    pass


class TangentNotInModel(OTNGError, ValueError):
    pass


class NotInclusionClosed(OTNGError, ValueError):
    pass


class TooManyBits(OTNGError, ValueError):
    pass


class ConfigError(OTNGError, ValueError):
    pass
