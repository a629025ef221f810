"""Closed-form repo convexity under correlated Hull-White bond rate and discount basis.

The bond discount rate and the derivative-minus-bond discount basis are two
Gaussian Ornstein-Uhlenbeck factors::

    d rbar = theta (rbar* - rbar) dt + sigma dx
    d b    = kappa (b*    - b)    dt + epsilon dy,    dx dy = rho dt

For a repo fixing at t, running over [s, e], on a zero-coupon bond maturing
at T, the log convexity adjustment is ``rho * sigma * epsilon * B`` with
B depending only on the gaps tau = s - t, delta = e - s, mu = T - e. It splits
into maturity adjustments at s and e plus a forwardness adjustment.

Every ``(1 - exp(-a x)) / a`` factor and every divided difference in
theta, kappa is routed through :mod:`repoconvexity._kernels`, so theta = 0,
kappa = 0 and both together are ordinary inputs, not special cases.
``T = math.inf`` (``INFINITE_MATURITY``) is accepted wherever the limit is
finite, which needs theta > 0.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ._kernels import (
    as_float,
    basis_kernel_integral,
    decay_integral,
    shifted_basis_kernel_integral,
)

INFINITE_MATURITY = math.inf


@dataclass(frozen=True)
class ModelParams:
    """Hull-White basis-model parameters, all per-annum decimals."""

    sigma: float
    epsilon: float
    theta: float
    kappa: float
    rho: float

    def __post_init__(self):
        for name in ("sigma", "epsilon", "theta", "kappa"):
            value = getattr(self, name)
            if not (math.isfinite(value) and value >= 0.0):
                raise ValueError(f"{name} must be finite and >= 0, got {value}")
        if not (math.isfinite(self.rho) and abs(self.rho) <= 1.0):
            raise ValueError(f"rho must lie in [-1, 1], got {self.rho}")

    @property
    def scale(self) -> float:
        """rho * sigma * epsilon, the common prefactor of every adjustment."""
        return self.rho * self.sigma * self.epsilon


@dataclass(frozen=True)
class RepoSchedule:
    """Repo fixing ``fix`` (t), period [start, end] (s, e) on a bond maturing at ``bond_maturity`` (T)."""

    fix: float
    start: float
    end: float
    bond_maturity: float
    accrual: float

    def __post_init__(self):
        t, s, e, T = self.fix, self.start, self.end, self.bond_maturity
        if not all(math.isfinite(x) for x in (t, s, e)) or math.isnan(T):
            raise ValueError("schedule dates must be finite (bond maturity may be inf)")
        if not (t <= s < e <= T):
            raise ValueError(f"schedule must satisfy t <= s < e <= T, got {t}, {s}, {e}, {T}")
        if not self.accrual > 0.0:
            raise ValueError(f"accrual must be positive, got {self.accrual}")

    @property
    def forwardness(self) -> float:
        return self.start - self.fix

    @property
    def period(self) -> float:
        return self.end - self.start

    @property
    def tail(self) -> float:
        return self.bond_maturity - self.end

    @classmethod
    def parse(cls, text: str) -> "RepoSchedule":
        """Parse ``"t,s,e,T,delta"``; T may be ``inf``."""
        parts = [p.strip() for p in text.split(",")]
        if len(parts) != 5:
            raise ValueError(f"schedule needs 5 comma-separated fields t,s,e,T,delta: {text!r}")
        try:
            values = [float(p) for p in parts]
        except ValueError as exc:
            raise ValueError(f"bad schedule {text!r}: {exc}") from None
        return cls(*values)


@dataclass(frozen=True)
class Adjustments:
    liquidity: float
    maturity_end: float
    maturity_start: float
    forwardness: float
    total: float

    @property
    def residual(self) -> float:
        """total - ((maturity_end - maturity_start) + forwardness)."""
        return self.total - ((self.maturity_end - self.maturity_start) + self.forwardness)


def _check_rates(theta, kappa):
    if np.any(np.asarray(theta) < 0.0) or np.any(np.asarray(kappa) < 0.0):
        raise ValueError("mean reversion rates must be >= 0")


def b_function(tau, delta, mu, theta, kappa):
    """Convexity per unit of rho * sigma * epsilon.

    ``B = (1-e^{-theta mu})/theta * I_end - (1-e^{-theta (delta+mu)})/theta * I_start``
    where ``I_end`` integrates ``e^{-theta v} (1-e^{-kappa v}) / kappa`` over the
    whole window ``tau + delta`` and ``I_start`` the same kernel, shifted by the
    repo period, over the forwardness ``tau``. Broadcasts over arrays.
    """
    tau, delta, mu = (np.asarray(v, dtype=float) for v in (tau, delta, mu))
    if np.any(tau < 0.0) or np.any(delta <= 0.0) or np.any(mu < 0.0):
        raise ValueError("need tau >= 0, delta > 0, mu >= 0")
    _check_rates(theta, kappa)
    end_term = decay_integral(theta, mu) * basis_kernel_integral(theta, kappa, tau + delta)
    start_term = decay_integral(theta, delta + mu) * shifted_basis_kernel_integral(
        theta, kappa, delta, tau
    )
    return as_float(end_term - start_term)


def _require_finite_limit(params: ModelParams, maturity: float) -> None:
    if math.isinf(maturity) and params.theta == 0.0:
        raise ValueError("infinite bond maturity needs theta > 0")


def convexity_adjustment(params: ModelParams, schedule: RepoSchedule) -> float:
    t, s, e, T = schedule.fix, schedule.start, schedule.end, schedule.bond_maturity
    if params.scale == 0.0 or (t == s and e == T):
        return 0.0
    _require_finite_limit(params, T)
    return params.scale * b_function(s - t, e - s, T - e, params.theta, params.kappa)


def maturity_adjustment(params: ModelParams, t: float, e: float, T: float) -> float:
    """Log adjustment taking the bond df to e into the repo df for a bond maturing at T."""
    if not t <= e:
        raise ValueError(f"need t <= e, got t={t}, e={e}")
    if T < e:
        raise ValueError(f"bond maturity {T} precedes repo end {e}")
    if e == T or e == t or params.scale == 0.0:
        return 0.0
    _require_finite_limit(params, T)
    return params.scale * float(
        decay_integral(params.theta, T - e) * basis_kernel_integral(params.theta, params.kappa, e - t)
    )


def forwardness_adjustment(params: ModelParams, t: float, s: float, e: float, T: float) -> float:
    """Log adjustment to the repo rate from fixing at t ahead of the start s."""
    if not (t <= s < e <= T):
        raise ValueError(f"need t <= s < e <= T, got {t}, {s}, {e}, {T}")
    if s == t or params.scale == 0.0:
        return 0.0
    _require_finite_limit(params, T)
    th, ka = params.theta, params.kappa
    return -params.scale * float(
        decay_integral(th, T - s) * decay_integral(ka, e - s) * decay_integral(th + ka, s - t)
    )


def liquidity_adjustment(mean_S: float, std_S: float) -> float:
    """Lognormal moment approximation ``mean + std**2 / 2`` of log E[exp(S)]."""
    if std_S < 0.0:
        raise ValueError(f"std_S must be >= 0, got {std_S}")
    return mean_S + 0.5 * std_S * std_S


def compute_adjustments(
    params: ModelParams, schedule: RepoSchedule, mean_S: float = 0.0, std_S: float = 0.0
) -> Adjustments:
    t, s, e, T = schedule.fix, schedule.start, schedule.end, schedule.bond_maturity
    adj = Adjustments(
        liquidity=liquidity_adjustment(mean_S, std_S),
        maturity_end=maturity_adjustment(params, t, e, T),
        maturity_start=maturity_adjustment(params, t, s, T),
        forwardness=forwardness_adjustment(params, t, s, e, T),
        total=convexity_adjustment(params, schedule),
    )
    if abs(adj.residual) > 1e-12 * max(1.0, abs(adj.total)):
        raise ArithmeticError(f"decomposition residual {adj.residual:.3e} for {schedule}")
    return adj
