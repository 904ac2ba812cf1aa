"""Object identification from OAM intensity correlations of pseudothermal speckle.

The package simulates a two-arm correlation measurement: random speckle
fields on a polar grid are projected onto orbital-angular-momentum modes in
a reference arm and, after passing an object mask, in a test arm.  Products
of the per-mode intensities accumulated over the ensemble reveal the
object's angular structure as a function of the mode difference
l_t - l_r, which analytic reference profiles predict exactly and the
identification routines invert.
"""

from .correlate import (
    CorrelationAccumulator,
    CorrelationMatrix,
    accumulate,
    delta_g2_from_matrix,
    delta_stderr_from_matrix,
    finalize,
    merge,
    new_accumulator,
    run_ensemble,
)
from .identify import (
    FractionalFit,
    FractionalVortexFitter,
    SymmetryDetector,
    SymmetryReport,
    band_contrast,
    delta_row,
    detect_symmetry,
    extract_row,
    fit_fractional,
)
from .masks import (
    AngularSlits,
    CustomRaster,
    FloorDecomposition,
    FractionalVortex,
    IntegerVortex,
    ObjectMask,
    Uniform,
    apply_mask,
    evaluate_mask,
    floor_decompose,
    load_custom_raster,
    save_custom_raster,
)
from .oam import (
    IntensitySpectrum,
    OamSpectrum,
    azimuthal_power_spectrum,
    project_oam,
    spectrum_intensity,
)
from .oracle import (
    SignalProfile,
    analytic_fractional,
    analytic_fractional_profile,
    analytic_slits,
    analytic_slits_profile,
    quadrature_signal,
    read_profile_csv,
    write_profile_csv,
)
from .speckle import (
    CoherenceSpec,
    CustomRadialEnvelope,
    DeltaCorrelated,
    Envelope,
    GaussianEnvelope,
    PolarGrid,
    Smoothed,
    SpeckleField,
    UniformDiskEnvelope,
    generate_realization,
    make_grid,
    total_power,
)

__version__ = "0.1.0"
