class ArtifactError(Exception):
    """Base class for all numerical domain errors raised by the package."""


class NonDiagonalizable(ArtifactError):
    pass


class PoleHit(ArtifactError):
    pass


class DegenerateA0(ArtifactError):
    pass


class BaseOnRay(ArtifactError):
    pass


class SeedAccuracy(ArtifactError):
    pass


class IntegratorFailure(ArtifactError):
    pass


class Resonant(ArtifactError):
    pass


class TriangularityViolation(ArtifactError):
    pass


class MembershipViolation(ArtifactError):
    pass


class SingularValue(ArtifactError):
    pass


class FDStepTooLarge(ArtifactError):
    pass


class OutsideBigCell(ArtifactError):
    pass


class LogBranch(ArtifactError):
    pass


class ConstraintViolation(ArtifactError):
    pass


class NotComposable(ArtifactError):
    pass


class UnsupportedOrder(ArtifactError):
    pass
