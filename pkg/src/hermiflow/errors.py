"""Exception types raised across the package."""


class HermiflowError(Exception):
    """Base class for all package errors."""


class DegreeMismatch(HermiflowError, ValueError):
    pass


class DegreeOutOfRange(HermiflowError, ValueError):
    pass


class DimensionMismatch(HermiflowError, ValueError):
    pass


class NotOrthogonal(HermiflowError, ValueError):
    pass


class NotOrthonormal(HermiflowError, ValueError):
    pass


class NotUnit(HermiflowError, ValueError):
    pass


class NormTooLarge(HermiflowError, ValueError):
    pass


class ZeroFunction(HermiflowError, ValueError):
    pass


class UnsupportedTargetKind(HermiflowError, ValueError):
    pass


class OddDegreeWithReflection(HermiflowError, ValueError):
    pass


class InfeasibleN(HermiflowError, ValueError):
    pass


class OutOfDomain(HermiflowError, ValueError):
    pass


class DegreeExceedsSpectrum(HermiflowError, ValueError):
    pass


class StepRejected(HermiflowError, RuntimeError):
    pass


class NonFiniteState(HermiflowError, RuntimeError):
    pass


class TooFewPoints(HermiflowError, ValueError):
    pass


class BlowUp(HermiflowError, ValueError):
    pass


class UnknownScenario(HermiflowError, ValueError):
    pass
