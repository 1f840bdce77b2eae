"""Energy spectra: histograms, spectral component models and detector response.

Energies are in eV throughout; livetimes in seconds.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from enum import Enum
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
from scipy.special import ndtr

from .errors import BinningMismatchError, FormatError, InvalidParameterError

FWHM_PER_SIGMA = 2.0 * math.sqrt(2.0 * math.log(2.0))  # 2.3548...
KERNEL_HALF_WIDTH_SIGMA = 6.0

# Placeholders from the X-ray literature, not measured by this experiment.
CU_KALPHA_EV = 8048.0
CU_KBETA_EV = 8905.0
FORBIDDEN_KALPHA_EV = 7729.0

DEFAULT_E_MIN = 7000.0
DEFAULT_E_MAX = 9500.0
DEFAULT_N_BINS = 250


@dataclass(frozen=True, eq=False)
class EnergySpectrum:
    """Uniformly binned counts over ``[e_min, e_max)``.

    Fills outside the range are tallied in ``underflow`` / ``overflow``
    rather than dropped. Instances are immutable; operations return new ones.
    """

    e_min: float
    e_max: float
    n_bins: int
    counts: np.ndarray
    livetime: float
    label: str = ""
    underflow: float = 0.0
    overflow: float = 0.0

    def __post_init__(self):
        _check_binning(self.e_min, self.e_max, self.n_bins)
        if not self.livetime > 0:
            raise InvalidParameterError("livetime", f"must be > 0, got {self.livetime!r}")
        counts = np.array(self.counts, dtype=float)
        if counts.shape != (self.n_bins,):
            raise InvalidParameterError(
                "counts", f"expected shape ({self.n_bins},), got {counts.shape}"
            )
        if np.any(counts < 0) or not np.all(np.isfinite(counts)):
            raise InvalidParameterError("counts", "entries must be finite and >= 0")
        if self.underflow < 0 or self.overflow < 0:
            raise InvalidParameterError("overflow", "tallies must be >= 0")
        counts.setflags(write=False)
        object.__setattr__(self, "counts", counts)

    @property
    def bin_width(self) -> float:
        return (self.e_max - self.e_min) / self.n_bins

    @property
    def edges(self) -> np.ndarray:
        return np.linspace(self.e_min, self.e_max, self.n_bins + 1)

    @property
    def centers(self) -> np.ndarray:
        e = self.edges
        return 0.5 * (e[:-1] + e[1:])

    @property
    def total(self) -> float:
        """In-range counts only."""
        return float(self.counts.sum())

    @property
    def total_with_spill(self) -> float:
        return self.total + self.underflow + self.overflow

    def is_empty(self) -> bool:
        return not self.counts.any() and self.underflow == 0 and self.overflow == 0

    def same_binning(self, other: "EnergySpectrum") -> bool:
        return (
            self.e_min == other.e_min
            and self.e_max == other.e_max
            and self.n_bins == other.n_bins
        )

    def bin_index(self, energy: float) -> int | None:
        """Index of the bin containing ``energy``, or None if out of range."""
        if not (self.e_min <= energy < self.e_max):
            return None
        i = int(math.floor((energy - self.e_min) / self.bin_width))
        return min(i, self.n_bins - 1)

    def with_counts(self, counts, **changes) -> "EnergySpectrum":
        return replace(self, counts=counts, **changes)

    def __add__(self, other: "EnergySpectrum") -> "EnergySpectrum":
        check_same_binning(self, other)
        return replace(
            self,
            counts=self.counts + other.counts,
            underflow=self.underflow + other.underflow,
            overflow=self.overflow + other.overflow,
        )


def _check_binning(e_min, e_max, n_bins):
    if not (math.isfinite(e_min) and math.isfinite(e_max) and e_min < e_max):
        raise InvalidParameterError("e_min", f"need e_min < e_max, got [{e_min}, {e_max}]")
    if isinstance(n_bins, bool) or int(n_bins) != n_bins or n_bins < 1:
        raise InvalidParameterError("n_bins", f"must be an integer >= 1, got {n_bins!r}")


def check_same_binning(a: EnergySpectrum, b: EnergySpectrum) -> None:
    if not a.same_binning(b):
        raise BinningMismatchError(
            f"binning differs: [{a.e_min}, {a.e_max}) x {a.n_bins} vs "
            f"[{b.e_min}, {b.e_max}) x {b.n_bins}"
        )


def make_spectrum(
    e_min: float = DEFAULT_E_MIN,
    e_max: float = DEFAULT_E_MAX,
    n_bins: int = DEFAULT_N_BINS,
    livetime: float = 1.0,
    label: str = "",
) -> EnergySpectrum:
    _check_binning(e_min, e_max, n_bins)
    return EnergySpectrum(
        float(e_min), float(e_max), int(n_bins), np.zeros(int(n_bins)), float(livetime), label
    )


def fill(spectrum: EnergySpectrum, energy: float) -> EnergySpectrum:
    """Return a copy of ``spectrum`` with one entry added at ``energy``."""
    return fill_many(spectrum, [energy])


def fill_many(spectrum: EnergySpectrum, energies: Iterable[float]) -> EnergySpectrum:
    """Vectorised :func:`fill`; result does not depend on the order of ``energies``."""
    e = np.asarray(list(energies) if not isinstance(energies, np.ndarray) else energies,
                   dtype=float)
    low = e < spectrum.e_min
    high = e >= spectrum.e_max
    inside = ~(low | high)
    idx = np.floor((e[inside] - spectrum.e_min) / spectrum.bin_width).astype(np.int64)
    np.clip(idx, 0, spectrum.n_bins - 1, out=idx)
    counts = spectrum.counts + np.bincount(idx, minlength=spectrum.n_bins)
    return replace(
        spectrum,
        counts=counts,
        underflow=spectrum.underflow + float(low.sum()),
        overflow=spectrum.overflow + float(high.sum()),
    )


class LineKind(str, Enum):
    ALLOWED = "allowed"
    FORBIDDEN = "forbidden"


@dataclass(frozen=True)
class LineModel:
    """A single X-ray line; ``intensity`` is the expected number of counts."""

    centroid: float
    intensity: float = 0.0
    kind: LineKind = LineKind.ALLOWED

    def __post_init__(self):
        object.__setattr__(self, "kind", LineKind(self.kind))
        if not (math.isfinite(self.centroid) and self.centroid > 0):
            raise InvalidParameterError("centroid", f"must be > 0, got {self.centroid!r}")
        if not self.intensity >= 0:
            raise InvalidParameterError("intensity", f"must be >= 0, got {self.intensity!r}")


@dataclass(frozen=True)
class ContinuumModel:
    """Piecewise-linear background rate density (counts / eV / s).

    ``nodes`` are strictly increasing energies; ``density`` holds the rate
    density at each node. A flat continuum needs just the two end nodes.
    """

    nodes: tuple[float, ...] = (DEFAULT_E_MIN, DEFAULT_E_MAX)
    density: tuple[float, ...] = (0.0, 0.0)

    def __post_init__(self):
        nodes = tuple(float(x) for x in self.nodes)
        density = tuple(float(x) for x in self.density)
        object.__setattr__(self, "nodes", nodes)
        object.__setattr__(self, "density", density)
        if len(nodes) < 2:
            raise InvalidParameterError("nodes", "need at least two nodes")
        if len(density) != len(nodes):
            raise InvalidParameterError("density", "need one density value per node")
        if any(b <= a for a, b in zip(nodes, nodes[1:])):
            raise InvalidParameterError("nodes", "must be strictly increasing")
        if any(not (d >= 0 and math.isfinite(d)) for d in density):
            raise InvalidParameterError("density", "must be finite and >= 0")

    @classmethod
    def flat(cls, density: float, e_min=DEFAULT_E_MIN, e_max=DEFAULT_E_MAX):
        return cls((e_min, e_max), (density, density))

    @property
    def e_min(self) -> float:
        return self.nodes[0]

    @property
    def e_max(self) -> float:
        return self.nodes[-1]

    def __call__(self, energy):
        return np.interp(energy, self.nodes, self.density, left=0.0, right=0.0)

    def integral(self, lo: float | None = None, hi: float | None = None) -> float:
        """Exact integral of the density over ``[lo, hi]`` (counts / s)."""
        lo = self.e_min if lo is None else max(lo, self.e_min)
        hi = self.e_max if hi is None else min(hi, self.e_max)
        if hi <= lo:
            return 0.0
        x = np.asarray(self.nodes)
        inner = x[(x > lo) & (x < hi)]
        pts = np.concatenate(([lo], inner, [hi]))
        y = self(pts)
        return float(np.sum(0.5 * (y[:-1] + y[1:]) * np.diff(pts)))

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        """Draw ``n`` energies distributed as the density (inverse CDF)."""
        x = np.asarray(self.nodes)
        d = np.asarray(self.density)
        w = np.diff(x)
        areas = 0.5 * (d[:-1] + d[1:]) * w
        total = areas.sum()
        if n == 0:
            return np.empty(0)
        if total <= 0:
            raise InvalidParameterError("density", "cannot sample from a zero continuum")
        seg = rng.choice(len(areas), size=n, p=areas / total)
        u = rng.random(n)
        d0, d1, w_s = d[seg], d[seg + 1], w[seg]
        slope = (d1 - d0) / w_s
        target = u * areas[seg]
        # root of d0*t + slope*t^2/2 = target in the cancellation-free form
        denom = d0 + np.sqrt(np.maximum(d0 * d0 + 2.0 * slope * target, 0.0))
        t = np.divide(2.0 * target, denom, out=np.zeros_like(target), where=denom > 0)
        return x[seg] + np.clip(t, 0.0, w_s)


@dataclass(frozen=True)
class ResponseModel:
    """Gaussian detector resolution.

    With ``fano_like_scaling`` the FWHM grows as sqrt(E / e_ref); otherwise
    it is constant.
    """

    fwhm_ref: float = 180.0
    e_ref: float = CU_KALPHA_EV
    fano_like_scaling: bool = False

    def __post_init__(self):
        if not (self.fwhm_ref > 0 and math.isfinite(self.fwhm_ref)):
            raise InvalidParameterError("fwhm_ref", f"must be > 0, got {self.fwhm_ref!r}")
        if not (self.e_ref > 0 and math.isfinite(self.e_ref)):
            raise InvalidParameterError("e_ref", f"must be > 0, got {self.e_ref!r}")

    def fwhm(self, energy):
        if self.fano_like_scaling:
            return self.fwhm_ref * np.sqrt(np.maximum(energy, 0.0) / self.e_ref)
        return np.full_like(np.asarray(energy, dtype=float), self.fwhm_ref)

    def sigma(self, energy):
        return self.fwhm(energy) / FWHM_PER_SIGMA

    def smear(self, rng: np.random.Generator, energies: np.ndarray) -> np.ndarray:
        energies = np.asarray(energies, dtype=float)
        return energies + self.sigma(energies) * rng.standard_normal(energies.shape)


def response_matrix(spectrum: EnergySpectrum, response: ResponseModel) -> np.ndarray:
    """``M[i, j]``: fraction of bin ``i`` (at its centre) landing in bin ``j``.

    The kernel is cut at +-6 sigma; rows sum to less than one by the mass that
    is truncated or falls outside the range.
    """
    edges = spectrum.edges
    c = spectrum.centers[:, None]
    s = np.asarray(response.sigma(spectrum.centers), dtype=float)[:, None]
    lo_cut = c - KERNEL_HALF_WIDTH_SIGMA * s
    hi_cut = c + KERNEL_HALF_WIDTH_SIGMA * s
    e = np.clip(edges[None, :], lo_cut, hi_cut)
    cdf = ndtr((e - c) / s)
    return np.diff(cdf, axis=1)


def convolve_response(ideal: EnergySpectrum, response: ResponseModel) -> EnergySpectrum:
    """Smear every bin with the Gaussian response.

    Mass leaving the range, and the kernel tails beyond +-6 sigma, are added
    to ``underflow`` / ``overflow`` so that the total is conserved.
    """
    m = response_matrix(ideal, response)
    counts = ideal.counts @ m
    c = ideal.centers
    s = np.asarray(response.sigma(c), dtype=float)
    kept = m.sum(axis=1)
    # everything below the first kept edge (range edge or the -6 sigma cut) spills low
    low_frac = np.minimum(
        ndtr((np.maximum(ideal.e_min, c - KERNEL_HALF_WIDTH_SIGMA * s) - c) / s), 1.0 - kept
    )
    high_frac = 1.0 - kept - low_frac
    low = float(ideal.counts @ low_frac)
    high = float(ideal.counts @ high_frac)
    return replace(
        ideal,
        counts=np.maximum(counts, 0.0),
        underflow=ideal.underflow + low,
        overflow=ideal.overflow + high,
    )


def _gauss_fraction(lo, hi, mu, sigma) -> float:
    """P(lo <= X < hi) for X ~ N(mu, sigma), tail-stable."""
    a = (lo - mu) / sigma
    b = (hi - mu) / sigma
    if a > 0:
        return float(ndtr(-a) - ndtr(-b))
    return float(ndtr(b) - ndtr(a))


def expected_counts_in_window(
    lines: Sequence[LineModel],
    continuum: ContinuumModel,
    response: ResponseModel,
    window: tuple[float, float],
    livetime: float,
) -> float:
    """Expected counts in ``window``: continuum integral times livetime plus
    each line's intensity times the part of its (untruncated) Gaussian inside.
    """
    lo, hi = map(float, window)
    if not lo < hi:
        raise InvalidParameterError("window", f"need lo < hi, got [{lo}, {hi}]")
    if lo < continuum.e_min or hi > continuum.e_max:
        raise InvalidParameterError(
            "window",
            f"[{lo}, {hi}] outside detector range [{continuum.e_min}, {continuum.e_max}]",
        )
    total = continuum.integral(lo, hi) * livetime
    for line in lines:
        sigma = float(response.sigma(line.centroid))
        total += line.intensity * _gauss_fraction(lo, hi, line.centroid, sigma)
    return total


def snap_window(spectrum: EnergySpectrum, window: tuple[float, float]) -> tuple[int, int]:
    """Bin index range ``[i_lo, i_hi)`` covering ``window``, edges snapped outward.

    Edges lying within 1e-9 of a bin width of a boundary count as on it.
    """
    lo, hi = map(float, window)
    if not lo < hi:
        raise InvalidParameterError("window", f"need lo < hi, got [{lo}, {hi}]")
    if lo < spectrum.e_min or hi > spectrum.e_max:
        raise InvalidParameterError(
            "window",
            f"[{lo}, {hi}] outside spectrum range [{spectrum.e_min}, {spectrum.e_max}]",
        )
    x_lo = (lo - spectrum.e_min) / spectrum.bin_width
    x_hi = (hi - spectrum.e_min) / spectrum.bin_width
    i_lo = round(x_lo) if abs(x_lo - round(x_lo)) < 1e-9 else math.floor(x_lo)
    i_hi = round(x_hi) if abs(x_hi - round(x_hi)) < 1e-9 else math.ceil(x_hi)
    return int(i_lo), int(min(i_hi, spectrum.n_bins))


def window_counts(spectrum: EnergySpectrum, window: tuple[float, float]) -> float:
    """Counts in the bins covering ``window`` (edges snapped outward)."""
    i_lo, i_hi = snap_window(spectrum, window)
    return float(spectrum.counts[i_lo:i_hi].sum())


def compare_spectra(a: EnergySpectrum, b: EnergySpectrum, window: tuple[float, float]) -> float:
    """Relative rate difference |Ra - Rb| / max(Ra, Rb) inside ``window``.

    Two empty windows compare as identical (0).
    """
    check_same_binning(a, b)
    ra = window_counts(a, window) / a.livetime
    rb = window_counts(b, window) / b.livetime
    top = max(ra, rb)
    if top == 0:
        return 0.0
    return abs(ra - rb) / top


# -- text format -----------------------------------------------------------

def format_spectrum(spectrum: EnergySpectrum) -> str:
    lines = [
        f"# label={spectrum.label}",
        f"# livetime_s={spectrum.livetime!r}",
        f"# e_min_ev={spectrum.e_min!r} e_max_ev={spectrum.e_max!r} n_bins={spectrum.n_bins}",
        f"# overflow={float(spectrum.overflow)!r} underflow={float(spectrum.underflow)!r}",
    ]
    edges = spectrum.edges
    for lo, hi, n in zip(edges[:-1], edges[1:], spectrum.counts):
        lines.append(f"{float(lo)!r} {float(hi)!r} {float(n)!r}")
    return "\n".join(lines) + "\n"


def _header_fields(line: str) -> dict[str, str]:
    out = {}
    for token in line[1:].split():
        key, sep, value = token.partition("=")
        if not sep:
            raise FormatError(f"malformed header token {token!r}")
        out[key] = value
    return out


def parse_spectrum(text: str) -> EnergySpectrum:
    header: dict[str, str] = {}
    rows = []
    for raw in text.splitlines():
        if raw.startswith("# label="):
            header["label"] = raw[len("# label="):]
        elif raw.startswith("#"):
            header.update(_header_fields(raw))
        elif raw.strip():
            parts = raw.split(" ")
            if len(parts) != 3:
                raise FormatError(f"expected '<lo> <hi> <counts>', got {raw!r}")
            rows.append(parts)
    try:
        e_min = float(header["e_min_ev"])
        e_max = float(header["e_max_ev"])
        n_bins = int(header["n_bins"])
        livetime = float(header["livetime_s"])
        overflow = float(header.get("overflow", "0"))
        underflow = float(header.get("underflow", "0"))
    except KeyError as exc:
        raise FormatError(f"missing header field {exc.args[0]}") from None
    except ValueError as exc:
        raise FormatError(str(exc)) from None
    if len(rows) != n_bins:
        raise FormatError(f"header says {n_bins} bins, found {len(rows)} rows")
    counts = np.array([float(r[2]) for r in rows])
    return EnergySpectrum(
        e_min, e_max, n_bins, counts, livetime, header.get("label", ""), underflow, overflow
    )


def write_spectrum(spectrum: EnergySpectrum, path) -> None:
    Path(path).write_text(format_spectrum(spectrum), encoding="utf-8")


def read_spectrum(path) -> EnergySpectrum:
    return parse_spectrum(Path(path).read_text(encoding="utf-8"))
