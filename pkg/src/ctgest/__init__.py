"""Continuous-time g-estimation of time-varying treatment effects.

The package simulates longitudinal observational survival data with
time-dependent confounding, computes counterfactual-mimicking transforms of
the observed outcome, solves martingale estimating equations for the
treatment-effect parameter jointly with the initiation-intensity nuisance
parameters, delivers sandwich confidence intervals, and tests for any
treatment effect without modeling the effect.
"""

from .errors import (
    CohortParseError,
    ConfigError,
    NoEventsError,
    NonConvergenceError,
    OdeIntegrationError,
    SingularityError,
)
from .estimation import (
    EstimationResult,
    GVector,
    SolveOptions,
    StackedG,
    alpha_diagnostic,
    g_patient,
    jacobian_stacked,
    sandwich,
    solve,
    stacked,
)
from .harness import RunConfig, parse_config, run_montecarlo
from .intensity import (
    MLEOptions,
    WeibullPHParams,
    cumulative_weighted,
    lambda_eval,
    segment_primitive,
    weibull_mle,
)
from .score_test import (
    TestResult,
    chi_square_sf,
    confidence_region_by_inversion,
    run_test,
    run_test_at_shift,
)
from .shift import (
    CustomRate,
    RegularityReport,
    ShiftModel,
    ShiftParams,
    SimpleAFT,
    StratifiedAFT,
    WindowRestricted,
    check_regularity,
    d_eval,
    dx_dpsi,
    x_closed_form,
    x_ode,
    x_path,
)
from .simulate import (
    DGPConfig,
    HazardSegment,
    SimulatedPatient,
    achieved_fractions,
    initiation_cumhaz,
    invert_piecewise_hazard,
    patient_stream,
    simulate_cohort,
    simulate_patient,
)
from .special import norm_ppf
from .trajectory import (
    Cohort,
    Trajectory,
    covariates_at,
    duration_treated,
    load_cohort,
    make_cohort,
    risk_end,
    save_cohort,
    segment_grid,
)

__version__ = "0.1.0"
