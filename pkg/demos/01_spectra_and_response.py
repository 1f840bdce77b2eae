"""
Spectra, line models and detector response
==========================================

A tour of the binned energy spectrum and the Gaussian response used
throughout the package.
"""
# %%
#

import numpy as np

from vipsim.spectra import (
    CU_KALPHA_EV,
    FORBIDDEN_KALPHA_EV,
    ContinuumModel,
    LineKind,
    LineModel,
    ResponseModel,
    convolve_response,
    expected_counts_in_window,
    fill_many,
    make_spectrum,
    window_counts,
)

# %%
#
# Spectra are uniform-bin histograms. Anything outside the range is tallied
# in underflow/overflow rather than silently dropped.

spec = make_spectrum(7000.0, 9500.0, 250, livetime=3600.0, label="demo")
spec = fill_many(spec, [6500.0, 7729.0, 8048.0, 8048.5, 9600.0])
print(spec.bin_width, spec.total, spec.underflow, spec.overflow)

# %%
#
# The response width scales with energy only when asked to.

response = ResponseModel(fwhm_ref=180.0, e_ref=CU_KALPHA_EV, fano_like_scaling=True)
print("FWHM at forbidden line:", response.fwhm(FORBIDDEN_KALPHA_EV))

# %%
#
# Convolving a single populated bin spreads it into a Gaussian; the total
# (including spill past the edges) is conserved.

ideal = make_spectrum(7000.0, 9500.0, 250, 1.0)
counts = np.zeros(250)
counts[ideal.bin_index(CU_KALPHA_EV)] = 1000.0
smeared = convolve_response(ideal.with_counts(counts), response)
print("peak bin:", smeared.counts.max().round(1), "total:", round(smeared.total_with_spill, 9))

# %%
#
# Expected counts in a window combine the continuum with each line's
# contained fraction. The line part matches the smeared peak above up to
# the offset between 8048 eV and the centre of its bin.

lines = [
    LineModel(CU_KALPHA_EV, 1000.0, LineKind.ALLOWED),
    LineModel(FORBIDDEN_KALPHA_EV, 0.0, LineKind.FORBIDDEN),
]
continuum = ContinuumModel.flat(1.2e-7)
window = (CU_KALPHA_EV - 270.0, CU_KALPHA_EV + 270.0)
livetime = 3600.0
expected = expected_counts_in_window(lines, continuum, response, window, livetime)
line_part = expected - continuum.integral(*window) * livetime
print(f"expected line counts: {line_part:.2f}")
print(f"smeared counts:       {window_counts(smeared, window):.2f}")
