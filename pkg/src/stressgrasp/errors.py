"""Exception hierarchy shared by all modules."""
from __future__ import annotations


class StressGraspError(Exception):
    """Base class for all package errors."""


class InputError(StressGraspError):
    """Bad user input (maps to CLI exit code 2)."""


class NumericalError(StressGraspError):
    """Numerical breakdown (maps to CLI exit code 3)."""


# geom
class ParseError(InputError):
    pass


class NotWatertight(InputError):
    def __init__(self, message: str, edges=()):
        super().__init__(message)
        self.edges = [tuple(int(v) for v in e) for e in edges]


class InvertedOrientation(InputError):
    pass


class DegenerateMesh(InputError):
    pass


class SamplingFailure(NumericalError):
    pass


class IsolatedVertex(InputError):
    pass


# wrench
class LengthMismatch(InputError):
    pass


class NonUnitNormal(InputError):
    pass


class SingularMoments(NumericalError):
    pass


class NotSymmetric(InputError):
    pass


# bem
class ZeroRadius(NumericalError):
    pass


class QuadratureFailure(NumericalError):
    pass


class SingularSystem(NumericalError):
    pass


class NonEquilibrium(NumericalError):
    pass


class SolveFailure(NumericalError):
    pass


class DegenerateTriangle(NumericalError):
    pass


class CacheMismatch(InputError):
    pass


# cone / metrics
class NumericalFailure(NumericalError):
    pass


class SolverFailure(NumericalError):
    def __init__(self, message: str, solution=None):
        super().__init__(message)
        self.solution = solution


class NoProgress(NumericalError):
    pass


# hull6
class DegenerateSpan(NumericalError):
    pass


# planner
class TooLarge(InputError):
    pass
