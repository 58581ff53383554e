"""Exception hierarchy shared by all modules."""


class AnisolabError(Exception):
    """Base class for all package errors."""


class InputDomainError(AnisolabError):
    """An argument violates a documented precondition (bad range, shape, norm)."""


class ModelValidityError(AnisolabError):
    """An anisotropy model violates positivity/homogeneity requirements."""


class ConvexityError(AnisolabError):
    """A_F is not positive definite where the computation requires it."""


class BuildError(AnisolabError):
    """Surface construction failed (degenerate metric, bad displacement)."""


class ConsistencyError(AnisolabError):
    """Two independent internal routes disagree beyond tolerance."""


class ConditioningError(AnisolabError):
    """A finite-difference step sweep found no stable plateau."""
