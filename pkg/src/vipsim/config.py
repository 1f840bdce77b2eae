"""Run configuration: a flat ``section.key = value`` text file.

Every key has a documented default, so an empty file is a valid config
describing the 2016 run plan (70 days off, 40 days at 100 A). Unknown keys
are rejected and all invalid values are reported together.

List-valued keys take comma-separated values; repeated structures use
indices, e.g. ``schedule_on.segments[1].current = 50``.
"""

from __future__ import annotations

import hashlib
import math
import re
from dataclasses import dataclass, field, replace
from pathlib import Path

from .electron_flow import (
    DEFAULT_CAPTURE_PROBABILITY,
    DEFAULT_CONDUCTOR_LENGTH,
    DEFAULT_DETECTION_EFFICIENCY,
    DEFAULT_SCATTERING_LENGTH,
    SECONDS_PER_DAY,
    CurrentSchedule,
    ElectronFlowModel,
)
from .errors import ConfigParseError, ConfigValidationError
from .limits import DEFAULT_N_SIGMA, RoiDefinition
from .montecarlo import DEFAULT_JITTER_NS, DEFAULT_VETO_WINDOW_NS, GeneratorConfig, VetoPolicy
from .spectra import (
    CU_KALPHA_EV,
    CU_KBETA_EV,
    DEFAULT_E_MAX,
    DEFAULT_E_MIN,
    DEFAULT_N_BINS,
    FORBIDDEN_KALPHA_EV,
    ContinuumModel,
    LineKind,
    LineModel,
    ResponseModel,
    make_spectrum,
)

SECONDS_PER_YEAR = 365.25 * SECONDS_PER_DAY

# Reduced-scale background: about 4e-4 SDD hits/s in the 7-9.5 keV range.
# Real rates are higher; the total scales every count linearly, so the
# limit moves as sqrt(rate) and the pipeline stays fast.
DEFAULT_CONTINUUM_DENSITY = 1.2e-7  # counts / eV / s
DEFAULT_LINES = (
    ("allowed", CU_KALPHA_EV, 1.0e-4),
    ("allowed", CU_KBETA_EV, 1.5e-5),
    ("forbidden", FORBIDDEN_KALPHA_EV, 0.0),
)
DEFAULT_COSMIC_RATE = 1.0e-3
DEFAULT_SEED = 2016


@dataclass(frozen=True)
class LineSpec:
    """A line as configured: ``rate`` is expected counts per second of livetime."""

    kind: LineKind
    centroid: float
    rate: float = 0.0

    def model(self, livetime: float) -> LineModel:
        return LineModel(self.centroid, self.rate * livetime, self.kind)


@dataclass(frozen=True)
class Binning:
    e_min: float = DEFAULT_E_MIN
    e_max: float = DEFAULT_E_MAX
    n_bins: int = DEFAULT_N_BINS


@dataclass(frozen=True)
class ProjectionPlan:
    """A future run plan for sensitivity projection."""

    on_duration: float = 1.5 * SECONDS_PER_YEAR
    off_duration: float = 1.5 * SECONDS_PER_YEAR
    current: float = 100.0
    background_scale: float = 1.0


@dataclass(frozen=True)
class RunConfig:
    generator: GeneratorConfig
    schedule_on: CurrentSchedule
    off_duration: float
    flow: ElectronFlowModel
    lines: tuple[LineSpec, ...]
    continuum: ContinuumModel
    response: ResponseModel
    binning: Binning
    roi: RoiDefinition
    roi_auto: bool
    veto: VetoPolicy
    n_sigma: float
    clamp_negative: bool
    project: ProjectionPlan
    output_dir: str
    sdd_background_rate_auto: bool = field(default=True)

    @property
    def forbidden_line(self) -> LineSpec:
        return next(ln for ln in self.lines if ln.kind is LineKind.FORBIDDEN)

    def line_models(self, livetime: float) -> list[LineModel]:
        return [ln.model(livetime) for ln in self.lines]

    def spectrum_template(self, livetime: float, label: str = ""):
        b = self.binning
        return make_spectrum(b.e_min, b.e_max, b.n_bins, livetime, label)

    def with_seed(self, seed: int) -> "RunConfig":
        return replace(self, generator=replace(self.generator, seed=seed))


# -- value converters ----------------------------------------------------------

_AUTO = "auto"


def _float(text):
    value = float(text)
    if not math.isfinite(value):
        raise ValueError(f"not a finite number: {text!r}")
    return value


def _int(text):
    return int(text, 10)


def _bool(text):
    low = text.lower()
    if low in ("true", "yes", "1", "on"):
        return True
    if low in ("false", "no", "0", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _float_or_auto(text):
    return None if text.lower() == _AUTO else _float(text)


def _float_list(text):
    return tuple(_float(part.strip()) for part in text.split(","))


def _kind(text):
    return LineKind(text.lower())


_SCALARS = {
    "generator.seed": _int,
    "generator.sdd_background_rate": _float_or_auto,
    "generator.cosmic_rate": _float,
    "generator.coincidence_jitter_ns": _int,
    "generator.injected_beta2_over_2": _float,
    "run.off_duration": _float,
    "flow.conductor_length": _float,
    "flow.scattering_length": _float,
    "flow.capture_probability": _float,
    "flow.detection_efficiency": _float,
    "continuum.nodes": _float_list,
    "continuum.density": _float_list,
    "response.fwhm_ref": _float,
    "response.e_ref": _float,
    "response.fano_like_scaling": _bool,
    "spectrum.e_min": _float,
    "spectrum.e_max": _float,
    "spectrum.n_bins": _int,
    "roi.lo": _float_or_auto,
    "roi.hi": _float_or_auto,
    "veto.enabled": _bool,
    "veto.window_ns": _int,
    "analysis.n_sigma": _float,
    "analysis.clamp_negative": _bool,
    "project.on_duration": _float,
    "project.off_duration": _float,
    "project.current": _float,
    "project.background_scale": _float,
    "output.dir": str,
}

_INDEXED = {
    "schedule_on.segments": {"current": _float, "duration": _float},
    "lines": {"kind": _kind, "centroid": _float, "rate": _float},
}

_INDEXED_RE = re.compile(r"^(?P<group>[a-z_.]+)\[(?P<index>\d+)\]\.(?P<field>[a-z_]+)$")


# -- parsing -------------------------------------------------------------------

def _split_lines(text: str) -> list[tuple[int, str, str]]:
    entries, problems = [], []
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        m = re.match(r"^([^=:\s]+)\s*[=:]\s*(.*)$", line)
        if m is None:
            problems.append(f"line {lineno}: expected 'key = value', got {raw.strip()!r}")
            continue
        entries.append((lineno, m.group(1), m.group(2).strip()))
    if problems:
        raise ConfigParseError(problems)
    return entries


def _collect(text: str):
    """Group raw entries into scalars and indexed blocks; reject unknown keys."""
    scalars: dict[str, tuple[int, str]] = {}
    indexed: dict[str, dict[int, dict[str, tuple[int, str]]]] = {}
    problems = []
    for lineno, key, value in _split_lines(text):
        m = _INDEXED_RE.match(key)
        if key in _SCALARS:
            slot = scalars
        elif m and m["group"] in _INDEXED and m["field"] in _INDEXED[m["group"]]:
            slot = indexed.setdefault(m["group"], {}).setdefault(int(m["index"]), {})
            key = m["field"]
        else:
            problems.append(f"line {lineno}: unknown key {key!r}")
            continue
        if key in slot:
            problems.append(f"line {lineno}: duplicate key {key!r}")
            continue
        slot[key] = (lineno, value)
    if problems:
        raise ConfigParseError(problems)
    return scalars, indexed


class _Builder:
    """Converts raw strings and accumulates every violation."""

    def __init__(self, scalars, indexed):
        self.scalars = scalars
        self.indexed = indexed
        self.violations: list[tuple[str, str]] = []

    def fail(self, key, message):
        self.violations.append((key, message))

    def get(self, key, default):
        if key not in self.scalars:
            return default
        return self.convert(key, self.scalars[key][1], _SCALARS[key], default)

    def convert(self, key, raw, conv, default):
        try:
            return conv(raw)
        except ValueError as exc:
            self.fail(key, f"invalid value {raw!r} ({exc})")
            return default

    def blocks(self, group, defaults):
        """List of dicts for an indexed group, or ``defaults`` if absent."""
        raw = self.indexed.get(group)
        if not raw:
            return [dict(d) for d in defaults]
        expected = list(range(len(raw)))
        if sorted(raw) != expected:
            self.fail(group, f"indices must be contiguous from 0, got {sorted(raw)}")
        out = []
        for i in sorted(raw):
            item = {}
            for name, conv in _INDEXED[group].items():
                key = f"{group}[{i}].{name}"
                if name not in raw[i]:
                    item[name] = None
                    if name != "rate":
                        self.fail(key, "missing")
                    continue
                item[name] = self.convert(key, raw[i][name][1], conv, None)
            out.append(item)
        return out

    def check(self, key, ok, message):
        if not ok:
            self.fail(key, message)
        return ok


def _build(scalars, indexed) -> RunConfig:
    b = _Builder(scalars, indexed)
    g = b.get

    # spectrum range first: several checks depend on it
    e_min = g("spectrum.e_min", DEFAULT_E_MIN)
    e_max = g("spectrum.e_max", DEFAULT_E_MAX)
    n_bins = g("spectrum.n_bins", DEFAULT_N_BINS)
    range_ok = b.check("spectrum.e_max", e_min < e_max, "must exceed spectrum.e_min")
    b.check("spectrum.n_bins", n_bins >= 1, "must be >= 1")

    segments = b.blocks(
        "schedule_on.segments", [{"current": 100.0, "duration": 40 * SECONDS_PER_DAY}]
    )
    seg_pairs = []
    for i, seg in enumerate(segments):
        cur, dur = seg["current"], seg["duration"]
        if cur is not None:
            b.check(f"schedule_on.segments[{i}].current", cur >= 0, f"must be >= 0, got {cur!r}")
        if dur is not None:
            b.check(f"schedule_on.segments[{i}].duration", dur > 0, f"must be > 0, got {dur!r}")
        if cur is not None and dur is not None and cur >= 0 and dur > 0:
            seg_pairs.append((cur, dur))

    off_duration = g("run.off_duration", 70 * SECONDS_PER_DAY)
    b.check("run.off_duration", off_duration > 0, f"must be > 0, got {off_duration!r}")

    flow_kw = {
        "conductor_length": g("flow.conductor_length", DEFAULT_CONDUCTOR_LENGTH),
        "scattering_length": g("flow.scattering_length", DEFAULT_SCATTERING_LENGTH),
        "capture_probability": g("flow.capture_probability", DEFAULT_CAPTURE_PROBABILITY),
        "detection_efficiency": g("flow.detection_efficiency", DEFAULT_DETECTION_EFFICIENCY),
    }
    for name in ("conductor_length", "scattering_length"):
        b.check(f"flow.{name}", flow_kw[name] > 0, "must be > 0")
    for name in ("capture_probability", "detection_efficiency"):
        b.check(f"flow.{name}", 0 < flow_kw[name] <= 1, "must lie in (0, 1]")

    line_blocks = b.blocks(
        "lines", [{"kind": LineKind(k), "centroid": c, "rate": r} for k, c, r in DEFAULT_LINES]
    )
    lines = []
    for i, item in enumerate(line_blocks):
        kind, centroid, rate = item["kind"], item["centroid"], item["rate"] or 0.0
        if kind is None or centroid is None:
            continue
        ok = True
        if range_ok:
            ok &= b.check(f"lines[{i}].centroid", e_min <= centroid < e_max,
                          f"{centroid!r} outside [{e_min}, {e_max})")
        ok &= b.check(f"lines[{i}].rate", rate >= 0, "must be >= 0")
        if kind is LineKind.FORBIDDEN:
            ok &= b.check(f"lines[{i}].rate", rate == 0,
                          "forbidden-line counts come from generator.injected_beta2_over_2")
        if ok:
            lines.append(LineSpec(kind, centroid, rate))
    n_forbidden = sum(1 for item in line_blocks if item["kind"] is LineKind.FORBIDDEN)
    b.check("lines", n_forbidden == 1, f"need exactly one forbidden line, found {n_forbidden}")

    nodes = g("continuum.nodes", (e_min, e_max))
    density = g("continuum.density", (DEFAULT_CONTINUUM_DENSITY,) * len(nodes))
    continuum = None
    shape_ok = b.check("continuum.density", len(density) == len(nodes), "need one value per node")
    shape_ok &= b.check(
        "continuum.nodes",
        len(nodes) >= 2 and all(y > x for x, y in zip(nodes, nodes[1:])),
        "need >= 2 strictly increasing energies",
    )
    shape_ok &= b.check("continuum.density", all(d >= 0 for d in density), "must be >= 0")
    if shape_ok:
        continuum = ContinuumModel(nodes, density)

    fwhm_ref = g("response.fwhm_ref", 180.0)
    e_ref = g("response.e_ref", CU_KALPHA_EV)
    fano = g("response.fano_like_scaling", False)
    b.check("response.fwhm_ref", fwhm_ref > 0, "must be > 0")
    b.check("response.e_ref", e_ref > 0, "must be > 0")

    seed = g("generator.seed", DEFAULT_SEED)
    b.check("generator.seed", 0 <= seed < 2**64, "must fit in 64 unsigned bits")
    bkg_rate = g("generator.sdd_background_rate", None)
    bkg_auto = bkg_rate is None
    if bkg_rate is not None:
        b.check("generator.sdd_background_rate", bkg_rate >= 0, "must be >= 0")
    cosmic = g("generator.cosmic_rate", DEFAULT_COSMIC_RATE)
    b.check("generator.cosmic_rate", cosmic >= 0, "must be >= 0")
    jitter = g("generator.coincidence_jitter_ns", DEFAULT_JITTER_NS)
    b.check("generator.coincidence_jitter_ns", jitter >= 0, "must be >= 0")
    injected = g("generator.injected_beta2_over_2", 0.0)
    b.check("generator.injected_beta2_over_2", injected >= 0, "must be >= 0")
    if injected > 0 and seg_pairs:
        b.check("generator.injected_beta2_over_2",
                any(cur > 0 for cur, _ in seg_pairs),
                "signal injection requires a non-zero current in schedule_on")

    veto_enabled = g("veto.enabled", True)
    veto_window = g("veto.window_ns", DEFAULT_VETO_WINDOW_NS)
    b.check("veto.window_ns", veto_window >= 0, "must be >= 0")

    n_sigma = g("analysis.n_sigma", DEFAULT_N_SIGMA)
    b.check("analysis.n_sigma", n_sigma > 0, "must be > 0")
    clamp = g("analysis.clamp_negative", True)

    plan_default = ProjectionPlan()
    plan_kw = {
        "on_duration": g("project.on_duration", plan_default.on_duration),
        "off_duration": g("project.off_duration", plan_default.off_duration),
        "current": g("project.current", plan_default.current),
        "background_scale": g("project.background_scale", plan_default.background_scale),
    }
    for name in ("on_duration", "off_duration"):
        b.check(f"project.{name}", plan_kw[name] > 0, "must be > 0")
    for name in ("current", "background_scale"):
        b.check(f"project.{name}", plan_kw[name] >= 0, "must be >= 0")

    roi_lo = g("roi.lo", None)
    roi_hi = g("roi.hi", None)
    roi_auto = roi_lo is None and roi_hi is None
    b.check("roi", roi_auto or (roi_lo is not None and roi_hi is not None),
            "roi.lo and roi.hi must both be numbers or both 'auto'")

    output_dir = g("output.dir", "out")

    if b.violations:
        raise ConfigValidationError(b.violations)

    schedule = CurrentSchedule(tuple(seg_pairs))
    response = ResponseModel(fwhm_ref, e_ref, fano)
    forbidden = next(ln for ln in lines if ln.kind is LineKind.FORBIDDEN)
    binning = Binning(e_min, e_max, n_bins)
    if roi_auto:
        roi = RoiDefinition.around(forbidden.centroid, float(response.fwhm(forbidden.centroid)))
        roi = RoiDefinition(max(roi.lo, e_min), min(roi.hi, e_max))
        roi = roi.snapped(make_spectrum(e_min, e_max, n_bins))
    else:
        roi = RoiDefinition(roi_lo, roi_hi) if roi_lo < roi_hi else None
    late = []
    if roi is None:
        late.append(("roi.hi", "must exceed roi.lo"))
    elif not (e_min <= roi.lo and roi.hi <= e_max):
        late.append(("roi.lo", f"ROI [{roi.lo}, {roi.hi}] outside spectrum range"))
    elif not (continuum.e_min <= roi.lo and roi.hi <= continuum.e_max):
        late.append(("continuum.nodes", "continuum must cover the ROI"))
    if bkg_auto and continuum is not None:
        bkg_rate = continuum.integral()
    if cosmic > 0 and continuum.integral() == 0:
        late.append(("generator.cosmic_rate", "cosmic hits need a non-zero continuum shape"))
    if bkg_rate > 0 and continuum.integral() == 0:
        late.append(("generator.sdd_background_rate", "needs a non-zero continuum shape"))
    if late:
        raise ConfigValidationError(late)

    generator = GeneratorConfig(
        seed=seed,
        duration=schedule.duration,
        sdd_background_rate=bkg_rate,
        cosmic_rate=cosmic,
        coincidence_jitter=jitter,
        injected_beta2_over_2=injected,
    )
    return RunConfig(
        generator=generator,
        schedule_on=schedule,
        off_duration=off_duration,
        flow=ElectronFlowModel(schedule, **flow_kw),
        lines=tuple(lines),
        continuum=continuum,
        response=response,
        binning=binning,
        roi=roi,
        roi_auto=roi_auto,
        veto=VetoPolicy(veto_window, veto_enabled),
        n_sigma=n_sigma,
        clamp_negative=clamp,
        project=ProjectionPlan(**plan_kw),
        output_dir=output_dir,
        sdd_background_rate_auto=bkg_auto,
    )


def parse_config(text: str) -> RunConfig:
    scalars, indexed = _collect(text)
    return _build(scalars, indexed)


def load_config(path) -> RunConfig:
    return parse_config(Path(path).read_text(encoding="utf-8"))


def default_config() -> RunConfig:
    return parse_config("")


# -- serialisation ---------------------------------------------------------------

def _num(x) -> str:
    return repr(float(x))


def dump_config(cfg: RunConfig) -> str:
    """Canonical text form; ``parse_config(dump_config(c)) == c``."""
    gen = cfg.generator
    out = [
        f"generator.seed = {gen.seed}",
        "generator.sdd_background_rate = "
        + (_AUTO if cfg.sdd_background_rate_auto else _num(gen.sdd_background_rate)),
        f"generator.cosmic_rate = {_num(gen.cosmic_rate)}",
        f"generator.coincidence_jitter_ns = {int(gen.coincidence_jitter)}",
        f"generator.injected_beta2_over_2 = {_num(gen.injected_beta2_over_2)}",
    ]
    for i, (cur, dur) in enumerate(cfg.schedule_on.segments):
        out.append(f"schedule_on.segments[{i}].current = {_num(cur)}")
        out.append(f"schedule_on.segments[{i}].duration = {_num(dur)}")
    out.append(f"run.off_duration = {_num(cfg.off_duration)}")
    fl = cfg.flow
    out += [
        f"flow.conductor_length = {_num(fl.conductor_length)}",
        f"flow.scattering_length = {_num(fl.scattering_length)}",
        f"flow.capture_probability = {_num(fl.capture_probability)}",
        f"flow.detection_efficiency = {_num(fl.detection_efficiency)}",
    ]
    for i, ln in enumerate(cfg.lines):
        out.append(f"lines[{i}].kind = {ln.kind.value}")
        out.append(f"lines[{i}].centroid = {_num(ln.centroid)}")
        out.append(f"lines[{i}].rate = {_num(ln.rate)}")
    out += [
        "continuum.nodes = " + ", ".join(_num(x) for x in cfg.continuum.nodes),
        "continuum.density = " + ", ".join(_num(x) for x in cfg.continuum.density),
        f"response.fwhm_ref = {_num(cfg.response.fwhm_ref)}",
        f"response.e_ref = {_num(cfg.response.e_ref)}",
        f"response.fano_like_scaling = {str(cfg.response.fano_like_scaling).lower()}",
        f"spectrum.e_min = {_num(cfg.binning.e_min)}",
        f"spectrum.e_max = {_num(cfg.binning.e_max)}",
        f"spectrum.n_bins = {cfg.binning.n_bins}",
        "roi.lo = " + (_AUTO if cfg.roi_auto else _num(cfg.roi.lo)),
        "roi.hi = " + (_AUTO if cfg.roi_auto else _num(cfg.roi.hi)),
        f"veto.enabled = {str(cfg.veto.enabled).lower()}",
        f"veto.window_ns = {int(cfg.veto.window)}",
        f"analysis.n_sigma = {_num(cfg.n_sigma)}",
        f"analysis.clamp_negative = {str(cfg.clamp_negative).lower()}",
        f"project.on_duration = {_num(cfg.project.on_duration)}",
        f"project.off_duration = {_num(cfg.project.off_duration)}",
        f"project.current = {_num(cfg.project.current)}",
        f"project.background_scale = {_num(cfg.project.background_scale)}",
        f"output.dir = {cfg.output_dir}",
    ]
    return "\n".join(out) + "\n"


def config_digest(cfg: RunConfig) -> str:
    return hashlib.sha256(dump_config(cfg).encode("utf-8")).hexdigest()
