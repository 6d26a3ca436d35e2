"""Exception hierarchy shared by all modules."""


class Cp2ToriError(Exception):
    """Base class; ``exit_code`` is used by the command line driver."""

    exit_code = 3


class ValidationError(Cp2ToriError):
    pass


class GradingViolation(ValidationError):
    pass


class TwistingViolation(ValidationError):
    pass


class RealityViolation(ValidationError):
    pass


class TraceViolation(ValidationError):
    pass


class BadDegree(ValidationError):
    pass


class DegenerateDraw(Cp2ToriError):
    pass


class DegreeOverflow(Cp2ToriError):
    pass


class TangencyFailure(Cp2ToriError):
    pass


class ToleranceFailure(Cp2ToriError):
    pass


class AdmissibilityFailure(Cp2ToriError):
    pass


class DegeneratePoint(Cp2ToriError):
    pass


class InconsistentPair(Cp2ToriError):
    pass


class GateFailure(Cp2ToriError):
    exit_code = 2


class ProjectionFailure(Cp2ToriError):
    pass


class SingularGauge(Cp2ToriError):
    pass


class LiftDiscontinuity(Cp2ToriError):
    pass


class ConformalityFailure(Cp2ToriError):
    pass


class SupportViolation(Cp2ToriError):
    pass


class ConvergenceFailure(Cp2ToriError):
    pass


class TruncationOverflow(Cp2ToriError):
    pass


class NearZeroTheta(Cp2ToriError):
    pass


class ThetaDivisorHit(NearZeroTheta):
    pass


class SingularSolution(Cp2ToriError):
    pass


class NonPositiveW(Cp2ToriError):
    pass


class UnitarityFailure(Cp2ToriError):
    pass


class InsufficientOverlap(Cp2ToriError):
    pass


class IOFailure(Cp2ToriError):
    exit_code = 4
