"""Simulation and ROI-counting analysis for current-on/current-off searches
for Pauli-forbidden X-ray transitions in copper."""

__version__ = "0.1.0"

from .electron_flow import (
    CurrentSchedule,
    ElectronFlowModel,
    count_new_electrons,
    count_scatterings,
    sensitivity_factor,
)
from .limits import (
    LimitResult,
    RoiDefinition,
    analyze,
    beta2_limit,
    count_upper_limit,
    project_sensitivity,
    roi_counts,
)
from .montecarlo import (
    Detector,
    EventRecord,
    EventStream,
    GeneratorConfig,
    Truth,
    VetoPolicy,
    apply_veto,
    events_to_spectrum,
    generate_run,
)
from .spectra import (
    ContinuumModel,
    EnergySpectrum,
    LineKind,
    LineModel,
    ResponseModel,
    compare_spectra,
    convolve_response,
    expected_counts_in_window,
    fill,
    fill_many,
    make_spectrum,
)
