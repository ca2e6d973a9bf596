"""Simulation and analysis of migration-contagion processes."""

from ._core import (
    CouplingViolation,
    Estimate,
    ModelParams,
    NumericalError,
    ValidationError,
    air_threshold,
    audit_docs,
    audit_sis,
    coupled_p_monotonicity,
    derive_params,
    docs_mean_x,
    docs_tl_fixed_point,
    docs_tl_rhs,
    docs_tl_rhs_slope0,
    docs_tl_threshold,
    estimate_g,
    estimate_g_prime0,
    find_p_star,
    median_extinction_time,
    p_star_upper_bound,
    params_from_density,
    run_cli,
    simulate_moments,
    sis_threshold_bounds,
)

__version__ = "0.1.0"
