"""On/off ROI counting analysis and the beta^2/2 upper limit.

The headline number uses the Gaussian n-sigma bound on the livetime-scaled
difference ``n_on - scale * n_off``. Exact Poisson routines are kept alongside
for small-count cross-checks.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from pathlib import Path

from scipy.optimize import brentq
from scipy.special import ndtr

from .electron_flow import CurrentSchedule, ElectronFlowModel
from .errors import FormatError, InvalidParameterError, ZeroSensitivityError
from .spectra import EnergySpectrum, check_same_binning, snap_window

DEFAULT_N_SIGMA = 3.0
ROI_HALF_WIDTH_FWHM = 1.5

# published beta^2/2 bounds used as comparison baselines
RAMBERG_SNOW_LIMIT = 1.7e-26
VIP_LIMIT = 4.7e-29
VIP2_PRELIMINARY_LIMIT = 1.4e-29


@dataclass(frozen=True)
class RoiDefinition:
    lo: float
    hi: float

    def __post_init__(self):
        if not (math.isfinite(self.lo) and math.isfinite(self.hi) and self.lo < self.hi):
            raise InvalidParameterError("roi", f"need lo < hi, got [{self.lo}, {self.hi}]")

    @classmethod
    def around(cls, centroid: float, fwhm: float, half_width_fwhm=ROI_HALF_WIDTH_FWHM):
        return cls(centroid - half_width_fwhm * fwhm, centroid + half_width_fwhm * fwhm)

    def snapped(self, spectrum: EnergySpectrum) -> "RoiDefinition":
        """The ROI widened outward to the enclosing bin edges."""
        i_lo, i_hi = _snap(spectrum, self)
        edges = spectrum.edges
        return RoiDefinition(float(edges[i_lo]), float(edges[i_hi]))


def _snap(spectrum, roi):
    try:
        return snap_window(spectrum, (roi.lo, roi.hi))
    except InvalidParameterError as exc:
        raise InvalidParameterError("roi", str(exc)) from None


@dataclass(frozen=True)
class LimitResult:
    n_on: float
    n_off: float
    livetime_on: float
    livetime_off: float
    scale: float
    delta: float
    delta_upper: float
    sensitivity: float
    beta2_limit: float
    n_sigma: float = DEFAULT_N_SIGMA

    @property
    def sigma_delta(self) -> float:
        return math.sqrt(self.n_on + self.scale**2 * self.n_off)

    @property
    def significance(self) -> float:
        """Excess in units of its Gaussian standard deviation."""
        s = self.sigma_delta
        return self.delta / s if s > 0 else 0.0

    @property
    def excludes_null(self) -> bool:
        return self.significance > self.n_sigma


def roi_counts(spectrum: EnergySpectrum, roi: RoiDefinition) -> float:
    """Counts in the bins covered by ``roi`` once its edges are snapped outward."""
    i_lo, i_hi = _snap(spectrum, roi)
    return float(spectrum.counts[i_lo:i_hi].sum())


def count_upper_limit(
    n_on: float,
    n_off: float,
    scale: float = 1.0,
    n_sigma: float = DEFAULT_N_SIGMA,
    clamp_negative: bool = True,
) -> float:
    """Gaussian upper bound on the excess counts,
    ``max(0, n_on - scale*n_off) + n_sigma*sqrt(n_on + scale^2 * n_off)``.

    With ``clamp_negative=False`` a deficit is carried into the bound, which
    is then floored at zero.
    """
    if n_on < 0 or n_off < 0:
        raise InvalidParameterError("n_on", "counts must be >= 0")
    if not (scale > 0 and math.isfinite(scale)):
        raise InvalidParameterError("scale", f"must be > 0, got {scale!r}")
    if not (n_sigma > 0 and math.isfinite(n_sigma)):
        raise InvalidParameterError("n_sigma", f"must be > 0, got {n_sigma!r}")
    delta = n_on - scale * n_off
    if clamp_negative:
        delta = max(0.0, delta)
    return max(0.0, delta + n_sigma * math.sqrt(n_on + scale * scale * n_off))


def beta2_limit(delta_upper: float, sensitivity: float) -> float:
    if not sensitivity > 0:
        raise ZeroSensitivityError(
            "sensitivity is zero: a current-off run cannot bound beta^2/2"
        )
    return delta_upper / sensitivity


def analyze(
    on: EnergySpectrum,
    off: EnergySpectrum,
    roi: RoiDefinition,
    flow: ElectronFlowModel,
    n_sigma: float = DEFAULT_N_SIGMA,
    clamp_negative: bool = True,
) -> LimitResult:
    check_same_binning(on, off)
    n_on = roi_counts(on, roi)
    n_off = roi_counts(off, roi)
    scale = on.livetime / off.livetime
    delta_upper = count_upper_limit(n_on, n_off, scale, n_sigma, clamp_negative)
    sensitivity = flow.sensitivity_factor
    return LimitResult(
        n_on=n_on,
        n_off=n_off,
        livetime_on=on.livetime,
        livetime_off=off.livetime,
        scale=scale,
        delta=n_on - scale * n_off,
        delta_upper=delta_upper,
        sensitivity=sensitivity,
        beta2_limit=beta2_limit(delta_upper, sensitivity),
        n_sigma=n_sigma,
    )


def project_sensitivity(
    plan: CurrentSchedule,
    off_duration: float,
    background_rate_in_roi: float,
    flow: ElectronFlowModel,
    n_sigma: float = DEFAULT_N_SIGMA,
) -> float:
    """Median expected limit of a zero-signal run plan.

    ``flow`` supplies the conductor/detection parameters; its own schedule is
    replaced by ``plan``.
    """
    if not background_rate_in_roi >= 0:
        raise InvalidParameterError("background_rate_in_roi", "must be >= 0")
    if not off_duration > 0:
        raise InvalidParameterError("off_duration", "must be > 0")
    t_on = plan.duration
    if not t_on > 0:
        raise InvalidParameterError("plan", "on-duration must be > 0")
    n_on = background_rate_in_roi * t_on
    n_off = background_rate_in_roi * off_duration
    delta_upper = count_upper_limit(n_on, n_off, t_on / off_duration, n_sigma)
    return beta2_limit(delta_upper, flow.with_schedule(plan).sensitivity_factor)


# -- exact Poisson cross-checks ----------------------------------------------

def confidence_level(n_sigma: float) -> float:
    """One-sided Gaussian confidence matching ``n_sigma``."""
    return float(ndtr(n_sigma))


def poisson_cdf(n: int, mu: float) -> float:
    """P(N <= n) for N ~ Poisson(mu), by explicit summation of the pmf."""
    if mu == 0:
        return 1.0
    log_mu = math.log(mu)
    return math.fsum(math.exp(k * log_mu - mu - math.lgamma(k + 1)) for k in range(n + 1))


def poisson_upper_limit(n_obs: int, background: float = 0.0, cl: float = 0.9) -> float:
    """Classical upper limit on a signal mean with known background.

    Smallest ``s >= 0`` with P(N <= n_obs | s + background) <= 1 - cl; zero
    when even ``s = 0`` already satisfies it.
    """
    alpha = 1.0 - cl

    def excess(s):
        return poisson_cdf(n_obs, s + background) - alpha

    if excess(0.0) <= 0:
        return 0.0
    hi = max(1.0, n_obs + 1.0)
    while excess(hi) > 0:
        hi *= 2.0
    return brentq(excess, 0.0, hi, xtol=1e-12, rtol=1e-12)


def _poisson_pmf_table(mu: float):
    """(k values, pmf) covering all but ~1e-15 of the Poisson(mu) mass."""
    if mu == 0:
        return [0], [1.0]
    k_max = int(mu + 12.0 * math.sqrt(mu) + 30)
    log_mu = math.log(mu)
    ks = list(range(k_max + 1))
    return ks, [math.exp(k * log_mu - mu - math.lgamma(k + 1)) for k in ks]


def gaussian_limit_coverage(
    signal: float,
    background_on: float,
    scale: float,
    n_sigma: float = DEFAULT_N_SIGMA,
    clamp_negative: bool = True,
) -> float:
    """Exact coverage of :func:`count_upper_limit`.

    Sums over every (n_on, n_off) outcome with n_on ~ Poisson(signal +
    background_on) and n_off ~ Poisson(background_on / scale), returning the
    probability that the bound is at least ``signal``.
    """
    k_on, p_on = _poisson_pmf_table(signal + background_on)
    k_off, p_off = _poisson_pmf_table(background_on / scale)
    total = []
    for a, pa in zip(k_on, p_on):
        for b, pb in zip(k_off, p_off):
            if count_upper_limit(a, b, scale, n_sigma, clamp_negative) >= signal:
                total.append(pa * pb)
    return math.fsum(total)


# -- key=value format ----------------------------------------------------------

_RESULT_KEYS = (
    "n_on", "n_off", "livetime_on", "livetime_off", "scale",
    "delta", "delta_upper", "sensitivity", "beta2_limit", "n_sigma",
)


def format_limit_result(result: LimitResult) -> str:
    values = asdict(result)
    return "".join(f"{k}={float(values[k])!r}\n" for k in _RESULT_KEYS)


def parse_limit_result(text: str) -> LimitResult:
    values = {}
    for raw in text.splitlines():
        if not raw.strip():
            continue
        key, sep, value = raw.partition("=")
        if not sep or key not in _RESULT_KEYS:
            raise FormatError(f"unexpected line {raw!r}")
        values[key] = float(value)
    missing = [k for k in _RESULT_KEYS if k not in values]
    if missing:
        raise FormatError(f"missing keys: {', '.join(missing)}")
    return LimitResult(**values)


def write_limit_result(result: LimitResult, path) -> None:
    Path(path).write_text(format_limit_result(result), encoding="utf-8")


def read_limit_result(path) -> LimitResult:
    return parse_limit_result(Path(path).read_text(encoding="utf-8"))
