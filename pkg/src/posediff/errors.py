"""Exception types shared across the package."""


class PosediffError(Exception):
    """Base class for package errors."""


class ShapeMismatch(PosediffError):
    pass


class ArityMismatch(PosediffError):
    pass


class InvalidSchedule(PosediffError):
    pass


class NonFiniteLoss(PosediffError):
    pass


class MissingCheckpoint(PosediffError):
    pass


class UntrainedModel(PosediffError):
    pass


class UntrainedEstimator(PosediffError):
    pass


class NoVisibleJoints(PosediffError):
    pass


class EmptyEvalSet(PosediffError):
    pass


class DegeneratePose(PosediffError):
    pass


class ExtractorMissing(PosediffError):
    pass


class InsufficientSamples(PosediffError):
    pass


class MissingPrerequisite(PosediffError):
    pass


class SchemaError(PosediffError):
    pass
