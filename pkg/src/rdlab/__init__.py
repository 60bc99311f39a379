"""Regression discontinuity analysis toolkit.

Continuity-based local polynomial estimation with robust bias-corrected
inference, local randomization window selection and Fisherian inference,
fuzzy (imperfect compliance) estimands, discrete-score handling, a
falsification battery, RD plot data, and a Monte Carlo laboratory.
"""

from .bandwidth import (
    BandwidthSelection,
    BandwidthTarget,
    SampleSizeMode,
    effective_sample_size,
    select_bandwidth,
)
from .continuity import (
    Estimand,
    EstimationSpec,
    FuzzyResult,
    RDResult,
    WEAK_F_THRESHOLD,
    estimate_fuzzy,
    estimate_sharp,
)
from .dataset import (
    Compliance,
    CutoffSide,
    RDDataset,
    RDDesign,
    ScoreProfile,
    derive_assignment,
    load_csv,
    score_profile,
)
from .dgp import DEFAULT_CURVED_DGP, CoverageResult, DGPSpec, ScoreDensity, TrueParams
from .dgp import coverage_study, generate
from .falsify import (
    DensityMethod,
    DensityTestResult,
    DiagnosticReport,
    DiagnosticRow,
    Framework,
    binomial_density_test,
    covariate_balance,
    density_discontinuity_test,
    donut_hole,
    first_stage_f,
    placebo_cutoffs,
    sensitivity_sweep,
)
from .locrand import (
    InferenceMethod,
    LocRandEstimate,
    RandInfResult,
    TestStatistic,
    Window,
    WindowSelectionTrace,
    fisher_ci,
    fisher_test,
    make_window,
    select_window,
    superpop_estimate,
)
from .plotting import (
    Binning,
    HistogramSeries,
    RDPlotData,
    build_rdplot,
    render_histogram_svg,
    render_rdplot_svg,
    score_histogram,
)
from .wls import (
    Kernel,
    LocalFit,
    VarianceMethod,
    VarianceEstimate,
    intercept_variance,
    kernel_weight,
    local_fit,
)

__version__ = "0.1.0"
