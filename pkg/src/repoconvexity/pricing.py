"""Repo discount factors, repo rates and repo-curve extrapolation from a bond curve.

All discount factors are quoted as of the curve valuation time. A schedule
fixing later than that uses forward ratios of valuation-time bond dfs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

from ._kernels import basis_kernel_integral, decay_integral, shifted_basis_kernel_integral
from .convexity import (
    INFINITE_MATURITY,
    ModelParams,
    RepoSchedule,
    forwardness_adjustment,
    maturity_adjustment,
)
from .curves import DiscountCurve


@dataclass(frozen=True)
class RepoCurveView:
    bond_curve: DiscountCurve
    params: ModelParams
    observed_repo_curve: Optional[DiscountCurve] = None

    def __post_init__(self):
        obs = self.observed_repo_curve
        if obs is None:
            return
        if obs.valuation_time != self.bond_curve.valuation_time:
            raise ValueError("observed repo curve and bond curve have different valuation times")
        if not obs.times:
            raise ValueError("observed repo curve has no pillars")
        if obs.last_time > self.bond_curve.last_time:
            raise ValueError(
                f"observed repo curve ends at {obs.last_time}, beyond the bond curve ({self.bond_curve.last_time})"
            )

    @property
    def valuation_time(self) -> float:
        return self.bond_curve.valuation_time

    @property
    def horizon(self) -> float:
        """Last observed repo maturity E."""
        if self.observed_repo_curve is None:
            raise ValueError("no observed repo curve")
        return self.observed_repo_curve.last_time


def _needs_theta(params: ModelParams, what: str) -> None:
    if params.theta <= 0.0:
        raise ValueError(f"{what} is unbounded for theta = 0")


def repo_df_infinite(view: RepoCurveView, e: float) -> float:
    """Repo df to e for collateral of unbounded maturity."""
    t = view.valuation_time
    p_bond = view.bond_curve.df(e)
    if e == t or view.params.scale == 0.0:
        return p_bond
    _needs_theta(view.params, "infinite-maturity repo df")
    return p_bond * math.exp(-maturity_adjustment(view.params, t, e, INFINITE_MATURITY))


def repo_df_finite(view: RepoCurveView, e: float, T: float, liquidity: float = 0.0) -> float:
    """Repo df to e for collateral maturing at T, geometric between bond and infinite-maturity dfs.

    ``liquidity`` is an extra log adjustment applied on top (zero in the pure model).
    """
    if T < e:
        raise ValueError(f"bond maturity {T} precedes repo end {e}")
    params = view.params
    if math.isinf(T):
        return repo_df_infinite(view, e) * math.exp(-liquidity)
    p_bond = view.bond_curve.df(e)
    if T == e:
        return p_bond * math.exp(-liquidity)
    if params.theta == 0.0:
        log_p = math.log(p_bond) - maturity_adjustment(params, view.valuation_time, e, T)
    else:
        # interpolate in logs; the infinite-maturity df itself can underflow for tiny theta
        keep = math.exp(-params.theta * (T - e))
        log_bond = math.log(p_bond)
        log_inf = log_bond - maturity_adjustment(params, view.valuation_time, e, INFINITE_MATURITY)
        log_p = keep * log_bond + (-math.expm1(-params.theta * (T - e))) * log_inf
    return math.exp(log_p - liquidity)


def _forward_bond_df(view: RepoCurveView, t: float, x: float) -> float:
    curve = view.bond_curve
    return curve.df(x) / curve.df(t)


def _repo_df_as_of(view: RepoCurveView, t: float, x: float, T: float) -> float:
    # p-hat_t^{xT} = pbar_t^x exp(-M_t^{xT}), pbar_t^x a forward ratio when t > valuation
    return _forward_bond_df(view, t, x) * math.exp(-maturity_adjustment(view.params, t, x, T))


def _check_schedule(view: RepoCurveView, schedule: RepoSchedule) -> None:
    curve = view.bond_curve
    if schedule.fix < curve.valuation_time:
        raise ValueError(f"fixing {schedule.fix} precedes the valuation time {curve.valuation_time}")
    if schedule.end > curve.last_time:
        raise ValueError(f"repo end {schedule.end} beyond bond curve ({curve.last_time})")


def repo_rate(view: RepoCurveView, schedule: RepoSchedule) -> float:
    """Fair simple repo rate: repo-df ratio times the forwardness factor."""
    _check_schedule(view, schedule)
    t, s, e, T = schedule.fix, schedule.start, schedule.end, schedule.bond_maturity
    ratio = _repo_df_as_of(view, t, s, T) / _repo_df_as_of(view, t, e, T)
    gross = ratio * math.exp(forwardness_adjustment(view.params, t, s, e, T))
    return (gross - 1.0) / schedule.accrual


def forwardness_limit_log_gross(view: RepoCurveView, schedule: RepoSchedule) -> tuple[float, float]:
    """log(1 + f delta) at zero and infinite forwardness, sharing the schedule's repo dfs.

    ``log(1 + f delta)`` of :func:`repo_rate` is the weighted mean of the two
    with weight ``exp(-(theta + kappa)(s - t))`` on the first. Logs stay
    finite where the infinite-forwardness rate itself overflows.
    """
    _check_schedule(view, schedule)
    t, s, e, T = schedule.fix, schedule.start, schedule.end, schedule.bond_maturity
    params = view.params
    spot = math.log(_repo_df_as_of(view, t, s, T) / _repo_df_as_of(view, t, e, T))
    if params.scale == 0.0:
        return spot, spot
    if params.theta + params.kappa == 0.0:
        raise ValueError("infinite forwardness limit is unbounded for theta = kappa = 0")
    if math.isinf(T):
        _needs_theta(params, "infinite forwardness limit with infinite maturity")
    full = params.scale * float(
        decay_integral(params.theta, T - s) * decay_integral(params.kappa, e - s)
    ) / (params.theta + params.kappa)
    return spot, spot - full


def forwardness_limit_rates(view: RepoCurveView, schedule: RepoSchedule) -> tuple[float, float]:
    """Simple rates at zero and infinite forwardness; see :func:`forwardness_limit_log_gross`."""
    spot, far = forwardness_limit_log_gross(view, schedule)
    return math.expm1(spot) / schedule.accrual, math.expm1(far) / schedule.accrual


def model_repo_basis(params: ModelParams, t: float, e: float) -> float:
    """Instantaneous repo-minus-bond forward spread implied by the model at maturity e."""
    if e < t:
        raise ValueError(f"maturity {e} precedes {t}")
    if params.scale == 0.0 or e == t:
        return 0.0
    _needs_theta(params, "repo forward basis")
    x = e - t
    return params.scale / params.theta * math.exp(-params.theta * x) * float(
        decay_integral(params.kappa, x)
    )


def repo_forward_rate(view: RepoCurveView, e: float) -> float:
    """Repo instantaneous forward: bond forward plus the model basis."""
    return view.bond_curve.forward(e) + model_repo_basis(view.params, view.valuation_time, e)


def observed_basis_at_horizon(view: RepoCurveView) -> float:
    """Observed repo forward minus bond forward at E, both as left limits."""
    E = view.horizon
    return view.observed_repo_curve.forward(E, side="left") - view.bond_curve.forward(E, side="left")


def _decay_ratio(kappa: float, x: float, x_ref: float) -> float:
    # (1 - e^{-kappa x}) / (1 - e^{-kappa x_ref}); tends to x / x_ref as kappa -> 0
    return float(decay_integral(kappa, x) / decay_integral(kappa, x_ref))


def extrapolate_basis(
    anchor_basis: float, params: ModelParams, t: float, E: float, e: float
) -> float:
    """Carry a repo-bond forward spread observed at E out to e > E."""
    if not E > t:
        raise ValueError(f"horizon {E} must follow {t}")
    return anchor_basis * math.exp(-params.theta * (e - E)) * _decay_ratio(params.kappa, e - t, E - t)


def extrapolate_repo_forward(
    view: RepoCurveView, e: float, anchor_basis: Optional[float] = None
) -> float:
    """Repo forward past the observed horizon E, referenced to bond forwards.

    ``anchor_basis`` defaults to :func:`observed_basis_at_horizon`.
    """
    E = view.horizon
    if not e > E:
        raise ValueError(f"extrapolation needs e > E = {E}, got {e}")
    if anchor_basis is None:
        anchor_basis = observed_basis_at_horizon(view)
    return view.bond_curve.forward(e) + extrapolate_basis(
        anchor_basis, view.params, view.valuation_time, E, e
    )


def _extrapolated_basis_integral(
    anchor_basis: float, params: ModelParams, t: float, E: float, b: float
) -> float:
    # closed-form integral of extrapolate_basis over [E, b]
    if anchor_basis == 0.0 or b == E:
        return 0.0
    th, ka = params.theta, params.kappa
    x_ref = E - t
    inner = shifted_basis_kernel_integral(th, ka, x_ref, b - E)
    return anchor_basis * float(inner / decay_integral(ka, x_ref))


def build_extrapolated_repo_curve(
    view: RepoCurveView,
    pillar_times: Sequence[float] = (),
    anchor_basis: Optional[float] = None,
) -> DiscountCurve:
    """Observed repo curve extended with extrapolated pillars beyond E.

    Each new df is the observed df at E, times the bond df ratio from E,
    times the exact integral of the extrapolated spread from E.
    """
    obs = view.observed_repo_curve
    if obs is None:
        raise ValueError("no observed repo curve")
    times = [float(x) for x in pillar_times]
    if not times:
        return obs
    E = view.horizon
    if any(b <= a for a, b in zip(times, times[1:])):
        raise ValueError("extrapolation pillars must be strictly increasing")
    if times[0] <= E:
        raise ValueError(f"extrapolation pillars must lie beyond E = {E}")
    if anchor_basis is None:
        anchor_basis = observed_basis_at_horizon(view)
    t = view.valuation_time
    bond = view.bond_curve
    df_E, log_bond_E = obs.df(E), bond.log_df(E)
    new = []
    for b in times:
        log_ratio = bond.log_df(b) - log_bond_E
        spread = _extrapolated_basis_integral(anchor_basis, view.params, t, E, b)
        new.append(df_E * math.exp(log_ratio - spread))
    return DiscountCurve(t, obs.times + tuple(times), obs.dfs + tuple(new))
