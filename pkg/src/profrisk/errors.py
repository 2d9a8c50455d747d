"""Exception types raised across the package."""


class ProfRiskError(Exception):
    """Base class for all package errors."""


class MissingAttribute(ProfRiskError):
    """An attribute needed for a similarity is absent; the caller should impute."""


class UnknownNode(ProfRiskError):
    pass


class UnknownUser(ProfRiskError):
    pass


class ShapeMismatch(ProfRiskError):
    pass


class InvalidChannelValue(ProfRiskError):
    pass


class DegenerateTraining(ProfRiskError):
    pass


class InvalidFeature(ProfRiskError):
    pass


class MissingChannel(ProfRiskError):
    pass


class EmptyInput(ProfRiskError):
    pass


class TooLarge(ProfRiskError):
    pass


class InvalidConfig(ProfRiskError):
    pass


class EmptyGroundTruth(ProfRiskError):
    pass


class TraceUnavailable(ProfRiskError):
    pass


class FormatError(ProfRiskError):
    """A data file is malformed or belongs to a different dataset."""
