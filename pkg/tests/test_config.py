import pytest

from vipsim.config import (
    DEFAULT_CONTINUUM_DENSITY,
    dump_config,
    load_config,
    parse_config,
)
from vipsim.errors import ConfigParseError, ConfigValidationError
from vipsim.limits import RoiDefinition
from vipsim.spectra import LineKind

from conftest import CONFIG_DIR


def test_minimal_config_gets_defaults():
    cfg = parse_config("generator.seed = 5\n")
    assert cfg.generator.seed == 5
    assert cfg.schedule_on.segments == ((100.0, 3456000.0),)
    assert cfg.off_duration == 6048000.0
    assert cfg.flow.capture_probability == 0.1
    assert cfg.flow.detection_efficiency == 0.01
    assert cfg.response.fwhm_ref == 180.0 and not cfg.response.fano_like_scaling
    assert cfg.n_sigma == 3.0 and cfg.clamp_negative
    assert cfg.veto.window == 500 and cfg.generator.coincidence_jitter == 100
    assert cfg.forbidden_line.centroid == 7729.0
    assert cfg.roi == RoiDefinition(7450.0, 8000.0) and cfg.roi_auto
    assert cfg.generator.sdd_background_rate == pytest.approx(2500 * DEFAULT_CONTINUUM_DENSITY)


def test_reference_file_equals_defaults():
    assert load_config(CONFIG_DIR / "reference_run_2016.cfg") == parse_config("")


def test_negative_current_named():
    with pytest.raises(ConfigValidationError) as info:
        parse_config("schedule_on.segments[0].current = -5\nschedule_on.segments[0].duration = 10")
    assert "schedule_on.segments[0].current" in info.value.keys


def test_all_violations_reported():
    text = "\n".join([
        "schedule_on.segments[0].current = -5",
        "schedule_on.segments[0].duration = 0",
        "run.off_duration = 0",
        "analysis.n_sigma = -1",
        "flow.capture_probability = 2",
        "veto.window_ns = abc",
    ])
    with pytest.raises(ConfigValidationError) as info:
        parse_config(text)
    assert set(info.value.keys) >= {
        "schedule_on.segments[0].current",
        "schedule_on.segments[0].duration",
        "run.off_duration",
        "analysis.n_sigma",
        "flow.capture_probability",
        "veto.window_ns",
    }


@pytest.mark.parametrize("text, key", [
    ("folw.conductor_length = 0.2", "folw.conductor_length"),
    ("folw: 3", "folw"),
    ("lines[0].width = 3", "lines[0].width"),
])
def test_unknown_key_rejected(text, key):
    with pytest.raises(ConfigParseError) as info:
        parse_config(text)
    assert key in str(info.value)


def test_duplicate_and_malformed_lines():
    with pytest.raises(ConfigParseError):
        parse_config("generator.seed = 1\ngenerator.seed = 2")
    with pytest.raises(ConfigParseError):
        parse_config("just words")


def test_line_list_replaces_defaults():
    cfg = parse_config(
        "lines[0].kind = forbidden\nlines[0].centroid = 7700\n"
        "lines[1].kind = allowed\nlines[1].centroid = 8000\nlines[1].rate = 0.5\n"
    )
    assert [ln.kind for ln in cfg.lines] == [LineKind.FORBIDDEN, LineKind.ALLOWED]
    assert cfg.roi == RoiDefinition(7430.0, 7970.0)
    with pytest.raises(ConfigValidationError):
        parse_config("lines[0].kind = allowed\nlines[0].centroid = 8000\n")


def test_manual_roi_and_partial_roi():
    assert parse_config("roi.lo = 7600\nroi.hi = 7850").roi == RoiDefinition(7600, 7850)
    with pytest.raises(ConfigValidationError):
        parse_config("roi.lo = 7600")
    with pytest.raises(ConfigValidationError):
        parse_config("roi.lo = 6000\nroi.hi = 7000")


def test_injection_needs_current():
    with pytest.raises(ConfigValidationError) as info:
        parse_config("schedule_on.segments[0].current = 0\nschedule_on.segments[0].duration = 5\n"
                     "generator.injected_beta2_over_2 = 1e-27")
    assert "generator.injected_beta2_over_2" in info.value.keys


@pytest.mark.parametrize("text", [
    "",
    "roi.lo = 7600\nroi.hi = 7900\ngenerator.sdd_background_rate = 0.002",
    "schedule_on.segments[0].current = 50\nschedule_on.segments[0].duration = 1e5\n"
    "schedule_on.segments[1].current = 0.25\nschedule_on.segments[1].duration = 3\n"
    "continuum.nodes = 7000, 8000, 9500\ncontinuum.density = 1e-7, 3e-7, 0\n"
    "response.fano_like_scaling = true\nveto.enabled = false\nanalysis.clamp_negative = false",
])
def test_round_trip(text):
    cfg = parse_config(text)
    again = parse_config(dump_config(cfg))
    assert again == cfg
    assert dump_config(again) == dump_config(cfg)
