"""Ramberg-Snow bookkeeping for electrons injected by the conductor current.

The expected number of forbidden-line counts is ``(beta^2/2) * S`` with

    S = N_new * N_scatter * capture_probability * detection_efficiency
    N_new = (integral of I dt) / e
    N_scatter = conductor_length / scattering_length
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction

from scipy.constants import elementary_charge

from .errors import InvalidParameterError

ELEMENTARY_CHARGE = elementary_charge  # C, exact in SI
_E_FRACTION = Fraction(ELEMENTARY_CHARGE)

SECONDS_PER_DAY = 86400.0

# Method and placeholder constants; none of these is measured here.
DEFAULT_CAPTURE_PROBABILITY = 0.1
DEFAULT_SCATTERING_LENGTH = 3.9e-8  # m, room-temperature Cu mean free path
DEFAULT_CONDUCTOR_LENGTH = 0.1  # m
DEFAULT_DETECTION_EFFICIENCY = 0.01  # tuned so the default run lands near the published limit


@dataclass(frozen=True)
class CurrentSchedule:
    """Sequence of constant-current segments ``(current_A, duration_s)``."""

    segments: tuple[tuple[float, float], ...] = ()

    def __post_init__(self):
        segs = tuple((float(i), float(t)) for i, t in self.segments)
        for k, (current, duration) in enumerate(segs):
            if not (current >= 0 and math.isfinite(current)):
                raise InvalidParameterError(
                    f"segments[{k}].current", f"must be >= 0, got {current!r}"
                )
            if not (duration > 0 and math.isfinite(duration)):
                raise InvalidParameterError(
                    f"segments[{k}].duration", f"must be > 0, got {duration!r}"
                )
        object.__setattr__(self, "segments", segs)

    @classmethod
    def constant(cls, current: float, duration: float) -> "CurrentSchedule":
        return cls(((current, duration),))

    @property
    def duration(self) -> float:
        return math.fsum(t for _, t in self.segments)

    @property
    def integrated_charge(self) -> float:
        return float(self._charge_exact())

    def _charge_exact(self) -> Fraction:
        # exact rational sum: splitting a segment cannot change the result
        return sum((Fraction(i) * Fraction(t) for i, t in self.segments), Fraction(0))

    def scaled(self, factor: float) -> "CurrentSchedule":
        """Same timing, every current multiplied by ``factor``."""
        return CurrentSchedule(tuple((i * factor, t) for i, t in self.segments))


def count_new_electrons(schedule: CurrentSchedule) -> float:
    """Number of electrons driven through the conductor, sum(I dt) / e."""
    return float(schedule._charge_exact() / _E_FRACTION)


def count_scatterings(conductor_length: float, scattering_length: float) -> float:
    """Scatterings per electron while crossing the conductor."""
    if not conductor_length > 0:
        raise InvalidParameterError("conductor_length", f"must be > 0, got {conductor_length!r}")
    if not scattering_length > 0:
        raise InvalidParameterError("scattering_length", f"must be > 0, got {scattering_length!r}")
    return conductor_length / scattering_length


def _check_fraction(name, value):
    if not (0.0 <= value <= 1.0):
        raise InvalidParameterError(name, f"must lie in [0, 1], got {value!r}")


def sensitivity_factor(
    schedule: CurrentSchedule,
    conductor_length: float = DEFAULT_CONDUCTOR_LENGTH,
    scattering_length: float = DEFAULT_SCATTERING_LENGTH,
    capture_probability: float = DEFAULT_CAPTURE_PROBABILITY,
    detection_efficiency: float = DEFAULT_DETECTION_EFFICIENCY,
) -> float:
    """Expected forbidden-line counts per unit beta^2/2."""
    _check_fraction("capture_probability", capture_probability)
    _check_fraction("detection_efficiency", detection_efficiency)
    return (
        count_new_electrons(schedule)
        * count_scatterings(conductor_length, scattering_length)
        * capture_probability
        * detection_efficiency
    )


@dataclass(frozen=True)
class ElectronFlowModel:
    """Current schedule plus conductor/detection parameters.

    Derived quantities are recomputed on construction and never passed in.
    """

    schedule: CurrentSchedule = field(default_factory=CurrentSchedule)
    conductor_length: float = DEFAULT_CONDUCTOR_LENGTH
    scattering_length: float = DEFAULT_SCATTERING_LENGTH
    capture_probability: float = DEFAULT_CAPTURE_PROBABILITY
    detection_efficiency: float = DEFAULT_DETECTION_EFFICIENCY

    integrated_charge: float = field(init=False)
    n_new: float = field(init=False)
    n_scatter: float = field(init=False)
    sensitivity_factor: float = field(init=False)

    def __post_init__(self):
        for name in ("capture_probability", "detection_efficiency"):
            value = getattr(self, name)
            if not (0.0 < value <= 1.0):
                raise InvalidParameterError(name, f"must lie in (0, 1], got {value!r}")
        set_ = object.__setattr__
        set_(self, "integrated_charge", self.schedule.integrated_charge)
        set_(self, "n_new", count_new_electrons(self.schedule))
        set_(self, "n_scatter", count_scatterings(self.conductor_length, self.scattering_length))
        set_(
            self,
            "sensitivity_factor",
            self.n_new * self.n_scatter * self.capture_probability * self.detection_efficiency,
        )

    @property
    def has_current(self) -> bool:
        return self.integrated_charge > 0

    def with_schedule(self, schedule: CurrentSchedule) -> "ElectronFlowModel":
        return ElectronFlowModel(
            schedule,
            self.conductor_length,
            self.scattering_length,
            self.capture_probability,
            self.detection_efficiency,
        )

