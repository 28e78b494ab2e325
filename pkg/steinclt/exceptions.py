"""Errors raised by the steinclt numerical modules."""


class SteinCLTError(Exception):
    """Base class for every steinclt error."""


# corr
class NonSymmetric(SteinCLTError):
    pass


class NonPsd(SteinCLTError):
    pass


class ZeroDiagonal(SteinCLTError):
    pass


class DegeneratePair(SteinCLTError):
    pass


class SingularMatrix(SteinCLTError):
    pass


class DimensionTooSmall(SteinCLTError):
    pass


class ShapeMismatch(SteinCLTError):
    pass


# polytope
class CollinearNormals(SteinCLTError):
    pass


class DegenerateTriple(SteinCLTError):
    pass


class RegularizationFailed(SteinCLTError):
    pass


class SingularGram(SteinCLTError):
    pass


class BadDirections(SteinCLTError):
    pass


class PolytopeParseError(SteinCLTError):
    pass


# gaussint
class InfiniteOffset(SteinCLTError):
    pass


class MissingTripleNormal(SteinCLTError):
    pass


class ZeroAngle(SteinCLTError):
    pass


# stein
class QuadratureBudgetExceeded(SteinCLTError):
    pass


class EmptyPairSet(SteinCLTError):
    pass


# bounds
class ZeroBeta(SteinCLTError):
    pass


class ZeroAlpha(SteinCLTError):
    pass


class ZeroSigmaStar(SteinCLTError):
    pass
