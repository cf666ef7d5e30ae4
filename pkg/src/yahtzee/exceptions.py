"""Exception hierarchy shared by the protocol modules and the CLI."""


class YahtzeeError(Exception):
    """Base class for all errors raised by this package."""

    exit_code = 1


class FileFormatError(YahtzeeError, ValueError):
    exit_code = 3


class EmptyNameError(YahtzeeError, ValueError):
    pass


class EmptyRegistryError(YahtzeeError, ValueError):
    exit_code = 3


class DomainError(YahtzeeError, ValueError):
    pass


class EmptyDrawsError(YahtzeeError, ValueError):
    pass


class EmptyTableError(YahtzeeError, ValueError):
    pass


class ParamsMismatchError(YahtzeeError, ValueError):
    exit_code = 4


class ConfigMismatchError(ParamsMismatchError):
    pass


class DuplicateRoundError(YahtzeeError, ValueError):
    exit_code = 6


class QuotaNotMetError(YahtzeeError):
    exit_code = 5

    def __init__(self, message, shortfall=None):
        super().__init__(message)
        self.shortfall = shortfall or {}


class TargetUnreachableError(YahtzeeError):
    exit_code = 7


class LengthMismatchError(YahtzeeError, ValueError):
    pass


class MissingTruthError(YahtzeeError, LookupError):
    pass
