"""Exit criteria for the package; each test records one PASS/FAIL line."""

import math
import time
from dataclasses import replace

import numpy as np
from scipy import stats

from vipsim import pipeline
from vipsim.config import load_config
from vipsim.electron_flow import CurrentSchedule, ElectronFlowModel, count_new_electrons
from vipsim.limits import (
    VIP2_PRELIMINARY_LIMIT,
    VIP_LIMIT,
    analyze,
    confidence_level,
    count_upper_limit,
    gaussian_limit_coverage,
    poisson_cdf,
    poisson_upper_limit,
    project_sensitivity,
)
from vipsim.montecarlo import (
    EventStream,
    GeneratorConfig,
    Truth,
    VetoPolicy,
    apply_veto,
    generate_run,
)
from vipsim.spectra import ContinuumModel, ResponseModel, convolve_response, make_spectrum

from conftest import CONFIG_DIR

DAY = 86400.0
REFERENCE_CFG = CONFIG_DIR / "reference_run_2016.cfg"
UPGRADE_CFG = CONFIG_DIR / "upgrade_3yr.cfg"


def test_c1_reference_limit_order_of_magnitude(tmp_path, record_criterion):
    cfg = load_config(REFERENCE_CFG)
    assert cfg.schedule_on.segments == ((100.0, 40 * DAY),) and cfg.off_duration == 70 * DAY
    assert cfg.generator.injected_beta2_over_2 == 0
    start = time.perf_counter()
    pipeline.run_simulate(cfg, tmp_path)
    result, _ = pipeline.run_analyze(
        cfg, tmp_path / "spectrum_on.txt", tmp_path / "spectrum_off.txt", tmp_path
    )
    elapsed = time.perf_counter() - start
    ratio = result.beta2_limit / VIP2_PRELIMINARY_LIMIT
    ok = 1 / 5 <= ratio <= 5 and elapsed < 60
    record_criterion(
        "C1 reference-plan limit within x5 of 1.4e-29",
        ok,
        f"beta2/2 <= {result.beta2_limit:.3e} (ratio {ratio:.3f}), {elapsed:.2f} s",
    )
    assert ok


def test_c2_new_electron_count(record_criterion):
    sched = CurrentSchedule.constant(100.0, 40 * DAY)
    n = count_new_electrons(sched)
    oracle = math.fsum(100.0 for _ in range(int(40 * DAY))) / 1.602176634e-19
    rel_target = abs(n - 2.157e27) / 2.157e27
    rel_oracle = abs(n - oracle) / oracle
    ok = rel_target <= 1e-3 and rel_oracle <= 1e-12
    record_criterion(
        "C2 N_new(100 A, 40 d) = 2.157e27 +- 1e-3",
        ok,
        f"N_new = {n:.6e}, rel. to 2.157e27 {rel_target:.1e}, rel. to per-second sum {rel_oracle:.1e}",
    )
    assert ok


def test_c3_injection_recovery(record_criterion):
    injected = 1e-27
    cfg = load_config(REFERENCE_CFG)
    cfg = replace(cfg, generator=replace(cfg.generator, injected_beta2_over_2=injected))
    expected = injected * cfg.flow.sensitivity_factor
    start = time.perf_counter()
    deltas, excluded = [], 0
    n_seeds = 100
    for seed in range(n_seeds):
        pair = pipeline.simulate_pair(cfg.with_seed(1000 + seed))
        r = analyze(pair.spectrum_on, pair.spectrum_off, cfg.roi, cfg.flow, cfg.n_sigma)
        deltas.append(r.delta)
        excluded += r.excludes_null
    elapsed = time.perf_counter() - start
    deltas = np.array(deltas)
    se = deltas.std(ddof=1) / math.sqrt(n_seeds)
    pull = (deltas.mean() - expected) / se
    frac = excluded / n_seeds
    ok = abs(pull) <= 3 and frac >= 0.9 and elapsed < 300
    record_criterion(
        "C3 injection recovery (beta2/2 = 1e-27, 100 seeds)",
        ok,
        f"mean excess {deltas.mean():.1f} vs {expected:.1f} ({pull:+.2f} SE), "
        f"null excluded in {frac:.0%}, {elapsed:.1f} s",
    )
    assert ok


def _poisson_gof_pvalue(counts, mu, n_classes=10):
    """Chi-square of observed counts against Poisson(mu) in equiprobable classes."""
    cuts = stats.poisson.ppf(np.linspace(0, 1, n_classes + 1)[1:-1], mu)
    cuts = np.unique(cuts)
    edges = np.concatenate(([-np.inf], cuts + 0.5, [np.inf]))
    observed = np.histogram(counts, bins=edges)[0]
    cdf = stats.poisson.cdf(np.concatenate((cuts, [np.inf])), mu)
    probs = np.diff(np.concatenate(([0.0], cdf)))
    expected = probs * len(counts)
    assert expected.min() >= 5
    return stats.chisquare(observed, expected).pvalue


def test_c4_statistical_soundness(record_criterion):
    cont = ContinuumModel.flat(1e-6)
    flow = ElectronFlowModel()
    rate, duration = 0.01, 1e5
    totals = [
        generate_run(GeneratorConfig(seed=s, duration=duration, sdd_background_rate=rate),
                     flow, [], cont, ResponseModel()).count(Truth.BACKGROUND)
        for s in range(200)
    ]
    p_value = _poisson_gof_pvalue(np.array(totals), rate * duration)

    # Gaussian bound against its closed form, and the exact Poisson cross-check
    cl = confidence_level(3.0)
    closed_form_ok = True
    exact_ok = True
    above = 0
    cells = 0
    for scale in (1.0, 40 / 70):
        for n_on in range(31):
            prev = -1.0
            for n_off in range(31)[::-1]:
                g = count_upper_limit(n_on, n_off, scale, 3.0)
                ref = max(0.0, n_on - scale * n_off) + 3.0 * math.sqrt(n_on + scale**2 * n_off)
                closed_form_ok &= g == ref
                e = poisson_upper_limit(n_on, scale * n_off, cl)
                if e > 0:
                    exact_ok &= abs(poisson_cdf(n_on, e + scale * n_off) - (1 - cl)) < 1e-9
                exact_ok &= e >= prev - 1e-9  # exact limit grows as background falls
                prev = e
                above += g >= e
                cells += 1
    # exact coverage of the Gaussian bound: under-covers at ~1 count, over-covers at tens
    cov_small = gaussian_limit_coverage(1.0, 1.0, 1.0)
    cov_large = gaussian_limit_coverage(20.0, 20.0, 1.0)
    coverage_doc = cov_small < cl <= cov_large

    ok = p_value > 0.01 and closed_form_ok and exact_ok and coverage_doc
    record_criterion(
        "C4 Poisson GOF + Gaussian/exact-Poisson cross-check",
        ok,
        f"GOF p = {p_value:.3f} (200 seeds); closed form exact: {closed_form_ok}; "
        f"Gaussian >= exact in {above}/{cells} cells; coverage at s=b=1: {cov_small:.4f}, "
        f"s=b=20: {cov_large:.5f} (nominal {cl:.5f})",
    )
    assert ok


def test_c5_convolution_conservation_linearity(record_criterion):
    rng = np.random.default_rng(2024)
    worst_total = 0.0
    worst_linear = 0.0
    for _ in range(1000):
        n_bins = int(rng.integers(10, 300))
        base = make_spectrum(7000.0, 9500.0, n_bins, 1.0)
        resp = ResponseModel(float(rng.uniform(20, 400)), 8048.0, bool(rng.integers(2)))
        a = base.with_counts(rng.exponential(100.0, n_bins) * (rng.random(n_bins) < 0.7))
        b = base.with_counts(rng.poisson(5.0, n_bins).astype(float))
        ca, cb = convolve_response(a, resp), convolve_response(b, resp)
        if a.total > 0:
            worst_total = max(worst_total, abs(ca.total_with_spill - a.total) / a.total)
        both = convolve_response(a + b, resp).counts
        summed = (ca + cb).counts
        nz = summed > 0
        assert np.array_equal(both == 0, ~nz)
        if nz.any():
            worst_linear = max(worst_linear, float(np.max(np.abs(both[nz] - summed[nz]) / summed[nz])))
    ok = worst_total <= 1e-9 and worst_linear <= 1e-12
    record_criterion(
        "C5 convolution conservation 1e-9 / linearity 1e-12",
        ok,
        f"worst total drift {worst_total:.1e}, worst bin-wise nonlinearity {worst_linear:.1e}",
    )
    assert ok


def _brute_force_survivors(stream: EventStream, window: int) -> set:
    sdd = np.flatnonzero(stream.sdd)
    scint = stream.t[~stream.sdd]
    if len(scint) == 0:
        return set(sdd.tolist())
    survivors = set()
    for chunk in np.array_split(sdd, max(1, len(sdd) // 500)):
        dt = np.abs(stream.t[chunk][:, None] - scint[None, :])
        survivors.update(chunk[~np.any(dt <= window, axis=1)].tolist())
    return survivors


def test_c6_veto_exactness(record_criterion):
    rng = np.random.default_rng(6)
    cont = ContinuumModel.flat(1e-6)
    mismatches = 0
    largest = 0
    for k in range(100):
        duration = float(rng.uniform(10, 1000))
        n_target = int(rng.integers(10, 10_000))
        split = rng.random()
        cfg = GeneratorConfig(
            seed=k,
            duration=duration,
            sdd_background_rate=split * n_target / duration,
            cosmic_rate=(1 - split) * n_target / (2 * duration),
            coincidence_jitter=int(rng.integers(0, 2_000_000)),
        )
        stream = generate_run(cfg, ElectronFlowModel(), [], cont, ResponseModel())
        stream = stream[: 10_000]
        largest = max(largest, len(stream))
        window = int(rng.integers(0, 2_000_000))
        kept = list(apply_veto(stream, VetoPolicy(window)))
        expected = [stream[i] for i in sorted(_brute_force_survivors(stream, window))]
        mismatches += kept != expected
    ok = mismatches == 0
    record_criterion(
        "C6 veto equals brute-force pairwise scan",
        ok,
        f"{100 - mismatches}/100 streams identical (largest {largest} events)",
    )
    assert ok


def test_c7_sensitivity_projection(record_criterion):
    cfg = load_config(UPGRADE_CFG)
    proj = pipeline.project(cfg)
    orders = math.log10(VIP_LIMIT / proj.projected_limit)
    in_decade = 1e-31 <= proj.projected_limit < 1e-30

    flow = cfg.flow
    rate = pipeline.background_rate_in_roi(cfg)
    base = project_sensitivity(CurrentSchedule.constant(100, 40 * DAY), 70 * DAY, rate, flow)
    quad = project_sensitivity(CurrentSchedule.constant(100, 160 * DAY), 280 * DAY, rate, flow)
    sqrt_law = abs(base / quad - 2.0) / 2.0

    ok = in_decade and 1.5 <= orders <= 2.5 and sqrt_law <= 1e-9
    record_criterion(
        "C7 3-year projection in 1e-31 decade, sqrt(t) law",
        ok,
        f"projected {proj.projected_limit:.3e}, {VIP_LIMIT / proj.projected_limit:.0f}x below "
        f"4.7e-29 ({orders:.2f} decades); 4x time gain {base / quad:.12f}",
    )
    assert ok


def test_c8_determinism(tmp_path, record_criterion):
    cfg = load_config(REFERENCE_CFG)
    outputs = []
    for run in ("first", "second"):
        out = tmp_path / run
        pipeline.run_simulate(cfg, out)
        pipeline.run_analyze(cfg, out / "spectrum_on.txt", out / "spectrum_off.txt", out)
        pipeline.run_project(cfg, out)
        outputs.append({p.name: p.read_bytes() for p in sorted(out.iterdir())})
    ok = outputs[0] == outputs[1] and len(outputs[0]) >= 8
    record_criterion(
        "C8 byte-identical events, spectra and reports",
        ok,
        f"{len(outputs[0])} files compared: " + ", ".join(sorted(outputs[0])),
    )
    assert ok
