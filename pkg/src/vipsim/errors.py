"""Exception hierarchy shared by all vipsim modules."""

from __future__ import annotations


class VipError(Exception):
    """Base class for every error raised by vipsim."""


class InvalidParameterError(VipError, ValueError):
    """A numeric input violates its precondition.

    ``field`` names the offending parameter so callers (and the config
    loader) can point at it.
    """

    def __init__(self, field: str, message: str):
        super().__init__(f"{field}: {message}")
        self.field = field


class BinningMismatchError(VipError, ValueError):
    pass


class SignalWithoutCurrentError(VipError, ValueError):
    pass


class UnsortedEventsError(VipError, ValueError):
    pass


class NonEmptyTemplateError(VipError, ValueError):
    pass


class ZeroSensitivityError(VipError, ValueError):
    """Raised when a limit is requested for a run with no current."""


class FormatError(VipError, ValueError):
    """A spectrum, event or result file does not follow its text format."""


class ConfigParseError(VipError):
    def __init__(self, problems: list[str]):
        super().__init__("; ".join(problems))
        self.problems = list(problems)


class ConfigValidationError(VipError):
    """Carries every violation found, as ``(key_path, message)`` pairs."""

    def __init__(self, violations: list[tuple[str, str]]):
        text = "; ".join(f"{key}: {msg}" for key, msg in violations)
        super().__init__(text)
        self.violations = list(violations)

    @property
    def keys(self) -> list[str]:
        return [key for key, _ in self.violations]
