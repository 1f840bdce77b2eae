"""Seeded generation of SDD / scintillator event streams and the timing veto.

Each run is the superposition of independent homogeneous Poisson processes:
continuum background, allowed X-ray lines, cosmic SDD hits paired with a
scintillator hit, and (optionally) the forbidden line. Every component draws
from its own sub-stream of the master seed so that switching one component on
or off does not change what the others produce.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Iterable, Iterator, Sequence

import numpy as np

from .electron_flow import ElectronFlowModel
from .errors import (
    FormatError,
    InvalidParameterError,
    NonEmptyTemplateError,
    SignalWithoutCurrentError,
    UnsortedEventsError,
)
from .spectra import (
    ContinuumModel,
    EnergySpectrum,
    LineKind,
    LineModel,
    ResponseModel,
    fill_many,
)

NS_PER_S = 1_000_000_000

DEFAULT_VETO_WINDOW_NS = 500
DEFAULT_JITTER_NS = 100

# spawn keys of the per-component sub-streams; never renumber
_STREAM_BACKGROUND = 1
_STREAM_COSMIC = 2
_STREAM_SIGNAL = 3
_STREAM_LINES = 100


class Detector(str, Enum):
    SDD = "sdd"
    SCINTILLATOR = "scintillator"


class Truth(str, Enum):
    BACKGROUND = "background"
    SIGNAL = "signal"
    COSMIC = "cosmic"


_DETECTORS = (Detector.SDD, Detector.SCINTILLATOR)
_TRUTHS = (Truth.BACKGROUND, Truth.SIGNAL, Truth.COSMIC)
_DET_CODE = {"sdd": 0, "scint": 1}
_TRUTH_CODE = {"bkg": 0, "sig": 1, "cosmic": 2}
_DET_NAME = {v: k for k, v in _DET_CODE.items()}
_TRUTH_NAME = {v: k for k, v in _TRUTH_CODE.items()}


@dataclass(frozen=True)
class EventRecord:
    t: int  # ns since run start
    detector: Detector
    energy: float  # eV, 0 for scintillator hits
    truth: Truth


class EventStream(Sequence):
    """Time-ordered events stored column-wise.

    Indexing yields :class:`EventRecord`; ``seed`` and ``duration`` (s) record
    where the stream came from.
    """

    def __init__(self, t, detector, energy, truth, *, duration: float, seed: int | None = None):
        self.t = np.asarray(t, dtype=np.int64)
        self.detector = np.asarray(detector, dtype=np.int8)
        self.energy = np.asarray(energy, dtype=float)
        self.truth = np.asarray(truth, dtype=np.int8)
        n = len(self.t)
        if not (len(self.detector) == len(self.energy) == len(self.truth) == n):
            raise ValueError("event columns differ in length")
        self.duration = float(duration)
        self.seed = seed

    @classmethod
    def from_records(cls, records: Iterable[EventRecord], *, duration: float, seed=None):
        records = list(records)
        return cls(
            [r.t for r in records],
            [_DETECTORS.index(Detector(r.detector)) for r in records],
            [r.energy for r in records],
            [_TRUTHS.index(Truth(r.truth)) for r in records],
            duration=duration,
            seed=seed,
        )

    def __len__(self) -> int:
        return len(self.t)

    def __getitem__(self, i):
        if isinstance(i, slice):
            return self._take(np.arange(len(self))[i])
        return EventRecord(
            int(self.t[i]),
            _DETECTORS[self.detector[i]],
            float(self.energy[i]),
            _TRUTHS[self.truth[i]],
        )

    def __iter__(self) -> Iterator[EventRecord]:
        for i in range(len(self)):
            yield self[i]

    def __eq__(self, other):
        if not isinstance(other, EventStream):
            return NotImplemented
        return (
            self.duration == other.duration
            and self.seed == other.seed
            and np.array_equal(self.t, other.t)
            and np.array_equal(self.detector, other.detector)
            and np.array_equal(self.energy, other.energy)
            and np.array_equal(self.truth, other.truth)
        )

    def _take(self, idx) -> "EventStream":
        return EventStream(
            self.t[idx], self.detector[idx], self.energy[idx], self.truth[idx],
            duration=self.duration, seed=self.seed,
        )

    def is_sorted(self) -> bool:
        return bool(np.all(np.diff(self.t) >= 0))

    @property
    def sdd(self) -> np.ndarray:
        return self.detector == 0

    def count(self, truth: Truth | str, detector: Detector | str = Detector.SDD) -> int:
        mask = (self.truth == _TRUTHS.index(Truth(truth))) & (
            self.detector == _DETECTORS.index(Detector(detector))
        )
        return int(mask.sum())


@dataclass(frozen=True)
class GeneratorConfig:
    """Parameters of one simulated run. Rates in 1/s, times in s or ns as named."""

    seed: int = 0
    duration: float = 1.0
    sdd_background_rate: float = 0.0
    cosmic_rate: float = 0.0
    coincidence_jitter: int = DEFAULT_JITTER_NS
    injected_beta2_over_2: float = 0.0

    def __post_init__(self):
        if not (self.duration > 0 and math.isfinite(self.duration)):
            raise InvalidParameterError("duration", f"must be > 0, got {self.duration!r}")
        for name in ("sdd_background_rate", "cosmic_rate", "injected_beta2_over_2"):
            value = getattr(self, name)
            if not (value >= 0 and math.isfinite(value)):
                raise InvalidParameterError(name, f"must be >= 0, got {value!r}")
        if not self.coincidence_jitter >= 0:
            raise InvalidParameterError(
                "coincidence_jitter", f"must be >= 0, got {self.coincidence_jitter!r}"
            )
        if not 0 <= self.seed < 2**64:
            raise InvalidParameterError("seed", "must be a 64-bit unsigned integer")

    @property
    def duration_ns(self) -> int:
        return int(round(self.duration * NS_PER_S))


@dataclass(frozen=True)
class VetoPolicy:
    window: int = DEFAULT_VETO_WINDOW_NS  # ns, half-width
    enabled: bool = True

    def __post_init__(self):
        if not self.window >= 0:
            raise InvalidParameterError("window", f"must be >= 0, got {self.window!r}")


def substream(seed: int, key: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(key,)))


def derive_seed(seed: int, label: int) -> int:
    """A 64-bit seed for a sibling run (e.g. the current-off run)."""
    state = np.random.SeedSequence(seed, spawn_key=(label,)).generate_state(1, np.uint64)
    return int(state[0])


def _times(rng, n, t_max_ns):
    return rng.integers(0, t_max_ns, size=n, dtype=np.int64)


def generate_run(
    cfg: GeneratorConfig,
    flow: ElectronFlowModel,
    lines: Sequence[LineModel],
    continuum: ContinuumModel,
    response: ResponseModel,
) -> EventStream:
    """Simulate one run.

    Allowed lines contribute Poisson(``intensity``) background hits each. The
    signal count is Poisson with mean ``injected_beta2_over_2 *
    flow.sensitivity_factor``, placed at the forbidden-line centroid. Every
    X-ray energy except the continuum is smeared by ``response``.
    """
    beta2 = cfg.injected_beta2_over_2
    if beta2 > 0 and not flow.has_current:
        raise SignalWithoutCurrentError(
            "injected_beta2_over_2 > 0 requires a run with non-zero integrated charge"
        )
    forbidden = [ln for ln in lines if ln.kind is LineKind.FORBIDDEN]
    if beta2 > 0 and not forbidden:
        raise InvalidParameterError("lines", "signal injection needs a forbidden line")

    t_max = max(cfg.duration_ns, 1)
    t_parts, det_parts, e_parts, truth_parts = [], [], [], []

    def add(t, det, e, truth):
        t_parts.append(t)
        det_parts.append(np.full(len(t), det, dtype=np.int8))
        e_parts.append(e)
        truth_parts.append(np.full(len(t), truth, dtype=np.int8))

    rng = substream(cfg.seed, _STREAM_BACKGROUND)
    n = rng.poisson(cfg.sdd_background_rate * cfg.duration)
    add(_times(rng, n, t_max), 0, continuum.sample(rng, n), 0)

    for k, line in enumerate(ln for ln in lines if ln.kind is LineKind.ALLOWED):
        rng = substream(cfg.seed, _STREAM_LINES + k)
        n = rng.poisson(line.intensity)
        e = response.smear(rng, np.full(n, line.centroid))
        add(_times(rng, n, t_max), 0, e, 0)

    rng = substream(cfg.seed, _STREAM_COSMIC)
    n = rng.poisson(cfg.cosmic_rate * cfg.duration)
    t_sdd = _times(rng, n, t_max)
    jitter = int(cfg.coincidence_jitter)
    offset = rng.integers(-jitter, jitter + 1, size=n, dtype=np.int64)
    t_scint = np.clip(t_sdd + offset, 0, t_max - 1)
    add(t_sdd, 0, continuum.sample(rng, n), 2)
    add(t_scint, 1, np.zeros(n), 2)

    if beta2 > 0:
        rng = substream(cfg.seed, _STREAM_SIGNAL)
        n = rng.poisson(beta2 * flow.sensitivity_factor)
        e = response.smear(rng, np.full(n, forbidden[0].centroid))
        add(_times(rng, n, t_max), 0, e, 1)

    t = np.concatenate(t_parts)
    order = np.argsort(t, kind="stable")
    return EventStream(
        t[order],
        np.concatenate(det_parts)[order],
        np.concatenate(e_parts)[order],
        np.concatenate(truth_parts)[order],
        duration=cfg.duration,
        seed=cfg.seed,
    )


def _as_stream(events) -> EventStream:
    if isinstance(events, EventStream):
        return events
    events = list(events)
    duration = (max((e.t for e in events), default=0) + 1) / NS_PER_S
    return EventStream.from_records(events, duration=duration)


def apply_veto(events, policy: VetoPolicy) -> EventStream:
    """Drop scintillator hits and, if enabled, SDD hits with a scintillator
    partner at ``|dt| <= policy.window``. Order is preserved.
    """
    stream = _as_stream(events)
    if not stream.is_sorted():
        raise UnsortedEventsError("events must be sorted by time")
    keep = stream.sdd.copy()
    if policy.enabled:
        scint_t = stream.t[~stream.sdd]
        sdd_idx = np.flatnonzero(keep)
        if len(scint_t) and len(sdd_idx):
            t = stream.t[sdd_idx]
            pos = np.searchsorted(scint_t, t)
            right = scint_t[np.minimum(pos, len(scint_t) - 1)]
            left = scint_t[np.maximum(pos - 1, 0)]
            nearest = np.minimum(np.abs(right - t), np.abs(t - left))
            keep[sdd_idx[nearest <= policy.window]] = False
    return stream._take(np.flatnonzero(keep))


def events_to_spectrum(events, template: EnergySpectrum) -> EnergySpectrum:
    """Histogram SDD energies into an empty ``template``.

    The livetime comes from the generating run when ``events`` is an
    :class:`EventStream`, else the template's livetime is kept.
    """
    if not template.is_empty():
        raise NonEmptyTemplateError("template spectrum must be empty")
    stream = events if isinstance(events, EventStream) else None
    if stream is None:
        energies = [e.energy for e in events if Detector(e.detector) is Detector.SDD]
        return fill_many(template, np.asarray(energies, dtype=float))
    out = fill_many(template, stream.energy[stream.sdd])
    return out.with_counts(out.counts, livetime=stream.duration)


# -- text format -----------------------------------------------------------

def format_events(stream: EventStream) -> str:
    seed = 0 if stream.seed is None else stream.seed
    out = [f"# seed={seed} duration_s={stream.duration!r}"]
    for t, d, e, k in zip(stream.t.tolist(), stream.detector.tolist(),
                          stream.energy.tolist(), stream.truth.tolist()):
        out.append(f"{t} {_DET_NAME[d]} {e!r} {_TRUTH_NAME[k]}")
    return "\n".join(out) + "\n"


def parse_events(text: str) -> EventStream:
    lines = text.splitlines()
    if not lines or not lines[0].startswith("#"):
        raise FormatError("missing '# seed=... duration_s=...' header")
    header = dict(tok.split("=", 1) for tok in lines[0][1:].split())
    try:
        seed = int(header["seed"])
        duration = float(header["duration_s"])
    except (KeyError, ValueError) as exc:
        raise FormatError(f"bad event header: {exc}") from None
    t, det, e, truth = [], [], [], []
    for raw in lines[1:]:
        if not raw.strip():
            continue
        parts = raw.split(" ")
        if len(parts) != 4:
            raise FormatError(f"expected 4 fields, got {raw!r}")
        try:
            t.append(int(parts[0]))
            det.append(_DET_CODE[parts[1]])
            e.append(float(parts[2]))
            truth.append(_TRUTH_CODE[parts[3]])
        except (KeyError, ValueError):
            raise FormatError(f"bad event line {raw!r}") from None
    return EventStream(t, det, e, truth, duration=duration, seed=seed)


def write_events(stream: EventStream, path) -> None:
    Path(path).write_text(format_events(stream), encoding="utf-8")


def read_events(path) -> EventStream:
    return parse_events(Path(path).read_text(encoding="utf-8"))
