"""Weighted sampling of key-value instances and unbiased L_p distance estimation."""

from .coordinated import (
    LowerHull,
    min_expected_square,
    rg_L_coordinated,
    rg_U_coordinated,
    v_optimal_estimate,
    v_optimal_hull,
    var_rg_L_coordinated,
)
from .independent import IndEstimatorParams, rg_L_independent, var_rg_L_independent_equal_tau
from .oc import OCTable, oc_build, oc_estimate
from .outcomes import (
    DeterminingVector,
    Outcome,
    build_outcome,
    build_outcomes,
    consistent_with_zero,
    determining_vector,
    lower_bound_rg,
    lower_bound_rg_at,
    rg,
)
from .query import EstimateReport, KeyPredicate, estimate_lp, estimate_lpp, estimate_one_sided
from .sampler import (
    Instance,
    InstanceSample,
    effective_thresholds,
    poisson_pps_sample,
    pps_threshold_for_expected_size,
    priority_sample,
    read_sample,
    write_sample,
)
from .seeds import FixedSeeds, HashConfig, Mode, seed_for

__version__ = "0.1.0"
