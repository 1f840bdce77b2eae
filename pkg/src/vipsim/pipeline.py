"""Config-driven workflows: simulate, analyze, project, compare.

Each workflow computes everything in memory first and then publishes its
files through temp-file + rename, so a failure never leaves partial results.
"""

from __future__ import annotations

import os
import tempfile
from dataclasses import dataclass, replace
from pathlib import Path

from . import __version__
from .config import RunConfig, config_digest, dump_config
from .electron_flow import SECONDS_PER_DAY, CurrentSchedule
from .errors import InvalidParameterError
from .limits import (
    RAMBERG_SNOW_LIMIT,
    VIP2_PRELIMINARY_LIMIT,
    VIP_LIMIT,
    LimitResult,
    RoiDefinition,
    analyze,
    format_limit_result,
    project_sensitivity,
)
from .montecarlo import (
    EventStream,
    apply_veto,
    derive_seed,
    events_to_spectrum,
    format_events,
    generate_run,
)
from .spectra import (
    ContinuumModel,
    EnergySpectrum,
    LineKind,
    compare_spectra,
    expected_counts_in_window,
    format_spectrum,
    read_spectrum,
)

OFF_RUN_LABEL = 1

EVENTS_ON = "events_on.txt"
EVENTS_OFF = "events_off.txt"
SPECTRUM_ON = "spectrum_on.txt"
SPECTRUM_OFF = "spectrum_off.txt"
MANIFEST = "manifest.txt"
LIMIT_FILE = "limit.txt"
REPORT_FILE = "report.txt"
PROJECTION_FILE = "projection.txt"
COMPARISON_FILE = "comparison.txt"


def publish(files: dict[Path, str]) -> None:
    """Write every file to a temp name, then rename them all into place."""
    staged = []
    try:
        for path, text in files.items():
            path.parent.mkdir(parents=True, exist_ok=True)
            fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
            with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as fh:
                fh.write(text)
            staged.append((tmp, path))
        for tmp, path in staged:
            os.replace(tmp, path)
    finally:
        for tmp, _ in staged:
            if os.path.exists(tmp):
                os.unlink(tmp)


@dataclass
class SimulatedPair:
    events_on: EventStream
    events_off: EventStream
    spectrum_on: EnergySpectrum
    spectrum_off: EnergySpectrum


def simulate_pair(cfg: RunConfig) -> SimulatedPair:
    """Generate the current-on and current-off runs and bin the vetoed events."""
    t_on = cfg.schedule_on.duration
    gen_on = replace(cfg.generator, duration=t_on)
    gen_off = replace(
        cfg.generator,
        seed=derive_seed(cfg.generator.seed, OFF_RUN_LABEL),
        duration=cfg.off_duration,
        injected_beta2_over_2=0.0,
    )
    flow_off = cfg.flow.with_schedule(CurrentSchedule())
    ev_on = generate_run(gen_on, cfg.flow, cfg.line_models(t_on), cfg.continuum, cfg.response)
    ev_off = generate_run(
        gen_off, flow_off, cfg.line_models(cfg.off_duration), cfg.continuum, cfg.response
    )
    spec_on = events_to_spectrum(
        apply_veto(ev_on, cfg.veto), cfg.spectrum_template(t_on, "current-on")
    )
    spec_off = events_to_spectrum(
        apply_veto(ev_off, cfg.veto), cfg.spectrum_template(cfg.off_duration, "current-off")
    )
    return SimulatedPair(ev_on, ev_off, spec_on, spec_off)


def _out_dir(cfg: RunConfig, out_dir) -> Path:
    return Path(cfg.output_dir if out_dir is None else out_dir)


def run_simulate(cfg: RunConfig, out_dir=None) -> dict[str, Path]:
    out = _out_dir(cfg, out_dir)
    pair = simulate_pair(cfg)
    manifest = "\n".join([
        f"vipsim_version={__version__}",
        f"config_digest={config_digest(cfg)}",
        f"seed={cfg.generator.seed}",
        f"seed_off={pair.events_off.seed}",
        f"{EVENTS_ON} {len(pair.events_on)} events",
        f"{EVENTS_OFF} {len(pair.events_off)} events",
        f"{SPECTRUM_ON} livetime_s={pair.spectrum_on.livetime!r}",
        f"{SPECTRUM_OFF} livetime_s={pair.spectrum_off.livetime!r}",
    ]) + "\n"
    files = {
        out / EVENTS_ON: format_events(pair.events_on),
        out / EVENTS_OFF: format_events(pair.events_off),
        out / SPECTRUM_ON: format_spectrum(pair.spectrum_on),
        out / SPECTRUM_OFF: format_spectrum(pair.spectrum_off),
        out / MANIFEST: manifest,
        out / "config.txt": dump_config(cfg),
    }
    publish(files)
    return {p.name: p for p in files}


def _provenance(cfg: RunConfig) -> list[str]:
    return [
        "[provenance]",
        f"vipsim_version = {__version__}",
        f"config_digest = {config_digest(cfg)}",
        f"seed = {cfg.generator.seed}",
    ]


def _references() -> list[str]:
    return [
        "[reference limits on beta^2/2]",
        f"ramberg_snow_1990 = {RAMBERG_SNOW_LIMIT:.2e}",
        f"vip_lngs = {VIP_LIMIT:.2e}",
        f"vip2_2016_preliminary = {VIP2_PRELIMINARY_LIMIT:.2e}",
    ]


def format_report(cfg: RunConfig, result: LimitResult, roi: RoiDefinition,
                  on_label: str = "", off_label: str = "") -> str:
    flow = cfg.flow
    lines = _provenance(cfg) + [
        "",
        "[inputs]",
        f"on_spectrum = {on_label} (livetime {result.livetime_on:.6g} s,"
        f" {result.livetime_on / SECONDS_PER_DAY:.4g} d)",
        f"off_spectrum = {off_label} (livetime {result.livetime_off:.6g} s,"
        f" {result.livetime_off / SECONDS_PER_DAY:.4g} d)",
        f"roi_ev = [{roi.lo!r}, {roi.hi!r})",
        f"forbidden_line_ev = {cfg.forbidden_line.centroid!r}",
        f"n_sigma = {result.n_sigma!r}",
        f"negative_excess = {'clamp' if cfg.clamp_negative else 'carry'}",
        "",
        "[electron flow]",
        f"integrated_charge_C = {flow.integrated_charge:.6e}",
        f"n_new = {flow.n_new:.6e}",
        f"n_scatter = {flow.n_scatter:.6e}",
        f"capture_probability = {flow.capture_probability!r}",
        f"detection_efficiency = {flow.detection_efficiency!r}",
        f"sensitivity = {flow.sensitivity_factor:.6e}",
        "",
        "[counts]",
        f"n_on = {result.n_on:.10g}",
        f"n_off = {result.n_off:.10g}",
        f"scale = {result.scale:.10g}",
        f"delta = {result.delta:.10g}",
        f"sigma_delta = {result.sigma_delta:.10g}",
        f"significance = {result.significance:.4f}",
        f"delta_upper = {result.delta_upper:.10g}",
        "",
        "[result]",
        f"beta2_over_2_limit = {result.beta2_limit:.4e}",
        "",
    ] + _references()
    return "\n".join(lines) + "\n"


def run_analyze(cfg: RunConfig, on_spectrum_path, off_spectrum_path, out_dir=None):
    """Analyze a pair of spectrum files; returns ``(LimitResult, report_text)``."""
    out = _out_dir(cfg, out_dir)
    on = read_spectrum(on_spectrum_path)
    off = read_spectrum(off_spectrum_path)
    result = analyze(on, off, cfg.roi, cfg.flow, cfg.n_sigma, cfg.clamp_negative)
    report = format_report(cfg, result, cfg.roi.snapped(on), on.label, off.label)
    publish({out / LIMIT_FILE: format_limit_result(result), out / REPORT_FILE: report})
    return result, report


def background_rate_in_roi(cfg: RunConfig) -> float:
    """Expected post-veto SDD background rate (1/s) inside the configured ROI."""
    cont = cfg.continuum
    rate = cfg.generator.sdd_background_rate
    shape_total = cont.integral()
    window = (cfg.roi.lo, cfg.roi.hi)
    roi_shape = cont.integral(*window) / shape_total if shape_total > 0 else 0.0
    allowed = [ln for ln in cfg.line_models(1.0) if ln.kind is LineKind.ALLOWED]
    zero = ContinuumModel(cont.nodes, (0.0,) * len(cont.nodes))
    total = rate * roi_shape + expected_counts_in_window(allowed, zero, cfg.response, window, 1.0)
    # cosmic hits survive only if their partner falls outside the veto window
    jitter = int(cfg.generator.coincidence_jitter)
    window_ns = int(cfg.veto.window)
    survive = 1.0
    if cfg.veto.enabled:
        survive = max(0, 2 * jitter + 1 - (2 * window_ns + 1)) / (2 * jitter + 1)
    return total + cfg.generator.cosmic_rate * roi_shape * survive


@dataclass(frozen=True)
class Projection:
    on_duration: float
    off_duration: float
    current: float
    background_scale: float
    background_rate_in_roi: float
    projected_limit: float
    improvement_over_vip: float
    configured_run_limit: float


def project(cfg: RunConfig, on_duration=None, off_duration=None, current=None,
            background_scale=None) -> Projection:
    plan = cfg.project
    plan = replace(
        plan,
        on_duration=plan.on_duration if on_duration is None else on_duration,
        off_duration=plan.off_duration if off_duration is None else off_duration,
        current=plan.current if current is None else current,
        background_scale=plan.background_scale if background_scale is None else background_scale,
    )
    if not plan.current > 0:
        raise InvalidParameterError("project.current", "projection needs a non-zero current")
    rate = background_rate_in_roi(cfg) * plan.background_scale
    schedule = CurrentSchedule.constant(plan.current, plan.on_duration)
    limit = project_sensitivity(schedule, plan.off_duration, rate, cfg.flow, cfg.n_sigma)
    current_run = project_sensitivity(
        cfg.schedule_on, cfg.off_duration, background_rate_in_roi(cfg), cfg.flow, cfg.n_sigma
    )
    return Projection(
        plan.on_duration, plan.off_duration, plan.current, plan.background_scale, rate,
        limit, VIP_LIMIT / limit if limit > 0 else float("inf"), current_run,
    )


def format_projection(cfg: RunConfig, p: Projection) -> str:
    lines = _provenance(cfg) + [
        "",
        "[plan]",
        f"on_duration_s = {p.on_duration!r} ({p.on_duration / SECONDS_PER_DAY:.4g} d)",
        f"off_duration_s = {p.off_duration!r} ({p.off_duration / SECONDS_PER_DAY:.4g} d)",
        f"current_A = {p.current!r}",
        f"background_scale = {p.background_scale!r}",
        f"background_rate_in_roi_per_s = {p.background_rate_in_roi:.6e}",
        f"n_sigma = {cfg.n_sigma!r}",
        "",
        "[projection]",
        f"projected_beta2_over_2_limit = {p.projected_limit:.4e}",
        f"configured_run_expected_limit = {p.configured_run_limit:.4e}",
        f"improvement_over_vip = {p.improvement_over_vip:.4g}",
        "",
    ] + _references()
    return "\n".join(lines) + "\n"


def run_project(cfg: RunConfig, out_dir=None, **overrides):
    out = _out_dir(cfg, out_dir)
    p = project(cfg, **overrides)
    report = format_projection(cfg, p)
    publish({out / PROJECTION_FILE: report})
    return p, report


def run_compare(mc_spectrum_path, data_spectrum_path, roi: RoiDefinition, out_dir):
    """Relative rate difference of two spectra in the ROI and over the full range."""
    mc = read_spectrum(mc_spectrum_path)
    data = read_spectrum(data_spectrum_path)
    in_roi = compare_spectra(mc, data, (roi.lo, roi.hi))
    full = compare_spectra(mc, data, (mc.e_min, mc.e_max))
    snapped = roi.snapped(mc)
    report = "\n".join([
        "[comparison]",
        f"mc = {mc.label} (livetime {mc.livetime:.6g} s)",
        f"data = {data.label} (livetime {data.livetime:.6g} s)",
        f"roi_ev = [{snapped.lo!r}, {snapped.hi!r})",
        f"relative_difference_roi = {in_roi:.6f}",
        f"relative_difference_full = {full:.6f}",
    ]) + "\n"
    publish({Path(out_dir) / COMPARISON_FILE: report})
    return in_roi, full, report
