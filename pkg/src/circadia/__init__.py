"""Standard (STS) and refined (RTS) two-stage trigonometric regression.

Individual cosinor fits are combined into population-level rhythm parameters
either by averaging linear coefficients (STS) or by averaging amplitudes and
unit phase vectors (RTS).  Wald tests with bootstrap calibration, forward
order selection and a Monte Carlo study harness are included.
"""

__version__ = "0.1.0"

from .estimators import CosinorRegressor, TwoStageCosinor, cohort_from_arrays
from .exceptions import *  # noqa: F401,F403
from .inference import (
    TestResult,
    bootstrap_amplitude_test,
    bootstrap_single_amplitude,
    bootstrap_two_cohort,
    bootstrap_zero_amplitudes,
    chisq_sf,
    empirical_pvalue,
    wald_statistic,
    wald_test,
    wald_test_two_cohort,
    wald_two_cohort,
)
from .rng import DistributionSpec, RngStream, derive_stream, sample
from .selection import OrderSelection, forward_order_select
from .simulate import SimSetting, dkw_band, generate_datasets, generate_subject, power_curve, run_study
from .trig import (
    AmpPhaseParams,
    CohortData,
    IndividualFit,
    LinearParams,
    SubjectSeries,
    circular_diff,
    design_matrix,
    fit_individual,
    gamma_to_theta,
    predict,
    theta_to_gamma,
)
from .twostage import GSpec, apply_g, estimate, rts_estimate, rts_transform, sts_estimate
