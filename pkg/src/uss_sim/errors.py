"""Exception hierarchy shared by every module."""


class USSError(Exception):
    """Base class for all simulator errors."""


class ValidationError(USSError, ValueError):
    """Bad parameters or arguments; maps to CLI exit code 2."""


class DivisibilityError(ValidationError):
    pass


class LevelBudgetError(ValidationError):
    pass


class ThresholdOrderError(ValidationError):
    pass


class MissingLevelError(ValidationError):
    pass


class LevelOutOfRange(ValidationError):
    pass


class LevelOrderError(ValidationError):
    pass


class ThresholdRangeError(ValidationError):
    pass


class KeyExhaustedError(USSError):
    pass


class InsufficientKeyFileError(ValidationError):
    pass


class KeyFileFormatError(ValidationError):
    pass


class AuthFailure(USSError):
    """Envelope tag or sequence check failed; the protocol run aborts."""


class UnknownMessage(ValidationError):
    pass


class ReusedMessage(ValidationError):
    pass


class CoalitionRoleError(ValidationError):
    pass


class InstanceTooLarge(ValidationError):
    pass


class CoalitionTooLarge(ValidationError):
    pass


class RoleError(ValidationError):
    pass


class ScenarioError(ValidationError):
    pass


class SnapshotFormatError(ValidationError):
    pass
