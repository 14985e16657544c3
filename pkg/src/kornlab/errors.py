"""Exception hierarchy shared by all kornlab modules."""


class KornlabError(Exception):
    """Base class for every error raised by kornlab."""


class ParameterError(KornlabError, ValueError):
    """An argument is outside its admissible range."""


class GeometryError(KornlabError):
    """A shape does not fit the grid, or the grid is malformed."""


class DegenerateDomainError(GeometryError):
    """Rasterization produced no interior node."""


class ContractError(KornlabError):
    """A precondition on a field (e.g. compact support) is violated."""


class DimensionError(KornlabError, ValueError):
    """An operator was called in a dimension where it is undefined."""


class MaskMismatchError(KornlabError, ValueError):
    """Two fields live on different masks."""


class NonConvergenceError(KornlabError, RuntimeError):
    """An iterative solver hit its iteration cap.

    The best iterate found so far is attached as ``best`` when available.
    """

    def __init__(self, message, best=None, iterations=None):
        super().__init__(message)
        self.best = best
        self.iterations = iterations


class OptimizationStallError(NonConvergenceError):
    """Every restart of the quotient ascent failed its line search."""
