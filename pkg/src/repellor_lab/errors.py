"""Exception types raised by the numerical routines."""


class RepellorLabError(Exception):
    """Base class for all errors raised by repellor_lab."""


class DegenerateMatrix(RepellorLabError):
    pass


class NonHyperbolic(RepellorLabError):
    pass


class NewtonDivergence(RepellorLabError):
    pass


class BranchCollision(RepellorLabError):
    pass


class TreeBudgetExceeded(RepellorLabError):
    pass


class WeakHyperbolicity(RepellorLabError):
    pass


class GridTooCoarse(RepellorLabError):
    pass


class ZeroHits(RepellorLabError):
    pass


class InsufficientMass(RepellorLabError):
    pass


class Inconclusive(RepellorLabError):
    pass


class UnsupportedSystem(RepellorLabError):
    pass


class ConfigError(RepellorLabError):
    pass
