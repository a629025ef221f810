"""Repo rates and repo convexity under a correlated Hull-White bond-rate / discount-basis model."""

from .convexity import (
    INFINITE_MATURITY,
    Adjustments,
    ModelParams,
    RepoSchedule,
    b_function,
    compute_adjustments,
    convexity_adjustment,
    forwardness_adjustment,
    liquidity_adjustment,
    maturity_adjustment,
)
from .curves import (
    DiscountCurve,
    RepoQuote,
    build_curve,
    discount_factor,
    instantaneous_forward,
    strip_bond_curve_from_spot_repos,
)
from .oracle import (
    CalibrationError,
    ShiftFunctions,
    SimConfig,
    SimResult,
    calibrate_shifts,
    mc_convexity,
    mc_repo_rate,
    quadrature_covariance,
)
from .pricing import (
    RepoCurveView,
    build_extrapolated_repo_curve,
    extrapolate_basis,
    extrapolate_repo_forward,
    forwardness_limit_log_gross,
    forwardness_limit_rates,
    model_repo_basis,
    observed_basis_at_horizon,
    repo_df_finite,
    repo_df_infinite,
    repo_forward_rate,
    repo_rate,
)

__version__ = "0.1.0"
