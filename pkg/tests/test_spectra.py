import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate
from scipy.stats import norm

from vipsim.errors import BinningMismatchError, InvalidParameterError
from vipsim.spectra import (
    FWHM_PER_SIGMA,
    ContinuumModel,
    LineModel,
    ResponseModel,
    compare_spectra,
    convolve_response,
    expected_counts_in_window,
    fill,
    fill_many,
    format_spectrum,
    make_spectrum,
    parse_spectrum,
)


def test_make_spectrum_defaults():
    s = make_spectrum(7000, 9500, 250, 86400)
    assert s.bin_width == 10.0
    assert s.n_bins == 250 and s.livetime == 86400
    assert not s.counts.any()


@pytest.mark.parametrize(
    "args, field",
    [
        ((7000, 9500, 0, 86400), "n_bins"),
        ((9500, 7000, 250, 86400), "e_min"),
        ((7000, 9500, 250, 0), "livetime"),
    ],
)
def test_make_spectrum_rejects(args, field):
    with pytest.raises(InvalidParameterError) as info:
        make_spectrum(*args)
    assert info.value.field == field


def test_fill_single_and_underflow():
    s = make_spectrum(7000, 9500, 250, 1.0)
    one = fill(s, 8048)
    assert one.counts[(8048 - 7000) // 10] == 1
    assert one.total == 1
    assert not s.counts.any()  # original untouched

    below = fill(s, 6999.9)
    assert below.total == 0 and below.underflow == 1 and below.overflow == 0
    above = fill(s, 9500.0)
    assert above.total == 0 and above.overflow == 1


def test_fill_additive():
    s = fill_many(make_spectrum(), [8048.0] * 1000)
    assert s.counts.max() == 1000 and s.total == 1000


def test_spectrum_text_round_trip():
    s = fill_many(make_spectrum(livetime=12.5, label="run a"), [7001.0, 8048.5, 9999.0, 10.0])
    back = parse_spectrum(format_spectrum(s))
    assert back.same_binning(s) and back.label == "run a" and back.livetime == 12.5
    assert np.array_equal(back.counts, s.counts)
    assert (back.underflow, back.overflow) == (1.0, 1.0)
    assert format_spectrum(back) == format_spectrum(s)


def _delta_spectrum(energy, n):
    s = make_spectrum(7000, 9500, 250, 1.0)
    counts = np.zeros(250)
    counts[s.bin_index(energy)] = n
    return s.with_counts(counts)


def test_convolve_delta_matches_gaussian_integrals():
    resp = ResponseModel(180.0, 8048.0)
    ideal = _delta_spectrum(8048.0, 1e6)
    out = convolve_response(ideal, resp)
    centre = ideal.centers[ideal.bin_index(8048.0)]
    sigma = 180.0 / 2.3548200450309493
    cut_lo, cut_hi = centre - 6 * sigma, centre + 6 * sigma
    pdf = norm(centre, sigma).pdf
    expected = []
    for lo, hi in zip(ideal.edges[:-1], ideal.edges[1:]):
        a, b = max(lo, cut_lo), min(hi, cut_hi)
        expected.append(1e6 * integrate.quad(pdf, a, b, epsabs=0, epsrel=1e-13)[0] if b > a else 0.0)
    np.testing.assert_allclose(out.counts, expected, rtol=1e-9, atol=1e-6)
    assert out.total_with_spill == pytest.approx(1e6, rel=1e-9)
    # peak shape: maximum at the line, FWHM of the histogram ~ 180 eV
    assert np.argmax(out.counts) == ideal.bin_index(8048.0)


def test_convolve_zero_is_zero():
    out = convolve_response(make_spectrum(), ResponseModel())
    assert not out.counts.any() and out.underflow == 0 and out.overflow == 0


def test_convolve_linear_on_two_deltas():
    resp = ResponseModel()
    a = _delta_spectrum(7729.0, 500.0)
    b = _delta_spectrum(8048.0, 2000.0)
    together = convolve_response(a + b, resp)
    apart = convolve_response(a, resp) + convolve_response(b, resp)
    np.testing.assert_allclose(together.counts, apart.counts, rtol=1e-12, atol=0)


def test_spill_goes_to_the_right_side():
    resp = ResponseModel(180.0)
    low = convolve_response(_delta_spectrum(7005.0, 100.0), resp)
    assert low.underflow == pytest.approx(100 * norm.cdf(-5 / (180 / FWHM_PER_SIGMA)), rel=1e-9)
    # only the truncated tail beyond +6 sigma counts as high spill here
    assert low.overflow == pytest.approx(100 * norm.sf(6.0), rel=1e-6)
    high = convolve_response(_delta_spectrum(9495.0, 100.0), resp)
    assert high.overflow > 40 and high.underflow == pytest.approx(100 * norm.sf(6.0), rel=1e-6)


def test_fano_scaling():
    r = ResponseModel(180.0, 8048.0, fano_like_scaling=True)
    assert float(r.fwhm(4 * 8048.0)) == pytest.approx(360.0)
    assert float(ResponseModel(180.0).fwhm(2000.0)) == 180.0


def test_expected_counts_flat_continuum():
    cont = ContinuumModel.flat(0.001)
    got = expected_counts_in_window([], cont, ResponseModel(), (7500, 7830), 1e5)
    assert got == pytest.approx(0.001 * 330 * 1e5, rel=1e-12)


def test_expected_counts_lines():
    cont = ContinuumModel.flat(0.0)
    line = LineModel(8048.0, 1234.0)
    assert expected_counts_in_window([line], cont, ResponseModel(), (7000, 9500), 1.0) == \
        pytest.approx(1234.0, rel=1e-12)
    edge = expected_counts_in_window([line], cont, ResponseModel(), (8048, 9500), 1.0)
    assert edge == pytest.approx(617.0, rel=1e-6)


def test_expected_counts_window_out_of_range():
    with pytest.raises(InvalidParameterError):
        expected_counts_in_window([], ContinuumModel.flat(1.0), ResponseModel(), (6000, 8000), 1.0)


def test_piecewise_continuum_integral_and_sampling():
    cont = ContinuumModel((7000, 8000, 9500), (2e-6, 0.0, 1e-6))
    # trapezoids: 0.5*2e-6*1000 + 0.5*1e-6*1500
    assert cont.integral() == pytest.approx(1e-3 + 7.5e-4, rel=1e-12)
    assert cont.integral(7000, 7500) == pytest.approx(0.5 * (2e-6 + 1e-6) * 500, rel=1e-12)
    e = cont.sample(np.random.default_rng(1), 200_000)
    assert e.min() >= 7000 and e.max() <= 9500
    frac = np.mean(e < 7500)
    se = math.sqrt(0.75e-3 / 1.75e-3 * (1 - 0.75e-3 / 1.75e-3) / len(e))
    assert abs(frac - 0.75e-3 / 1.75e-3) < 5 * se


def _with_rates(n_a, n_b):
    a = make_spectrum(livetime=1.0)
    b = make_spectrum(livetime=1.0)
    return fill_many(a, [7600.0] * n_a), fill_many(b, [7600.0] * n_b)


def test_compare_spectra_examples():
    a, b = _with_rates(13, 10)
    assert compare_spectra(a, a, (7450, 8000)) == 0
    assert compare_spectra(a, b, (7450, 8000)) == pytest.approx(0.3 / 1.3, rel=1e-12)
    empty = make_spectrum()
    assert compare_spectra(a, empty, (7450, 8000)) == 1.0
    with pytest.raises(BinningMismatchError):
        compare_spectra(a, make_spectrum(n_bins=100), (7450, 8000))


def test_compare_uses_livetime():
    a, b = _with_rates(26, 10)
    a = a.with_counts(a.counts, livetime=2.0)
    assert compare_spectra(a, b, (7450, 8000)) == pytest.approx(0.3 / 1.3, rel=1e-12)


counts_arrays = st.lists(
    st.floats(min_value=0, max_value=1e6, allow_nan=False), min_size=40, max_size=40
)


@settings(max_examples=60, deadline=None)
@given(counts_arrays, st.floats(min_value=5.0, max_value=400.0), st.booleans())
def test_convolution_conserves_total(values, fwhm, fano):
    s = make_spectrum(7000, 9000, 40, 1.0).with_counts(np.array(values))
    out = convolve_response(s, ResponseModel(fwhm, 8048.0, fano))
    assert out.total_with_spill == pytest.approx(s.total, rel=1e-9, abs=1e-300)


@settings(max_examples=60, deadline=None)
@given(counts_arrays, counts_arrays)
def test_convolution_linear(x, y):
    base = make_spectrum(7000, 9000, 40, 1.0)
    a, b = base.with_counts(np.array(x)), base.with_counts(np.array(y))
    resp = ResponseModel(150.0)
    np.testing.assert_allclose(
        convolve_response(a + b, resp).counts,
        (convolve_response(a, resp) + convolve_response(b, resp)).counts,
        rtol=1e-12, atol=0,
    )


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(min_value=6500, max_value=10000), max_size=60), st.randoms())
def test_fill_order_independent(energies, rnd):
    shuffled = list(energies)
    rnd.shuffle(shuffled)
    s = make_spectrum()
    one_by_one = s
    for e in shuffled:
        one_by_one = fill(one_by_one, e)
    batch = fill_many(s, energies)
    assert np.array_equal(one_by_one.counts, batch.counts)
    assert (one_by_one.underflow, one_by_one.overflow) == (batch.underflow, batch.overflow)


@settings(max_examples=50, deadline=None)
@given(
    st.lists(st.integers(0, 50), min_size=250, max_size=250),
    st.lists(st.integers(0, 50), min_size=250, max_size=250),
    st.floats(0.1, 10), st.floats(0.1, 10),
)
def test_compare_symmetric(x, y, ta, tb):
    a = make_spectrum(livetime=ta).with_counts(np.array(x, dtype=float))
    b = make_spectrum(livetime=tb).with_counts(np.array(y, dtype=float))
    w = (7450.0, 8000.0)
    assert compare_spectra(a, a, w) == 0
    assert compare_spectra(a, b, w) == compare_spectra(b, a, w)


@settings(max_examples=50, deadline=None)
@given(st.floats(7000, 9000), st.floats(1, 250), st.floats(1, 250))
def test_expected_counts_monotone_in_width(lo, w1, w2):
    small, big = sorted((w1, w2))
    lines = [LineModel(8048.0, 100.0), LineModel(7729.0, 5.0, "forbidden")]
    cont = ContinuumModel((7000, 8000, 9500), (1e-4, 3e-4, 0.0))
    resp = ResponseModel()
    a = expected_counts_in_window(lines, cont, resp, (lo, min(lo + small, 9500)), 10.0)
    b = expected_counts_in_window(lines, cont, resp, (lo, min(lo + big, 9500)), 10.0)
    assert b >= a
