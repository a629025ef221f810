"""Independent checks of the closed forms.

* :func:`quadrature_covariance` integrates the bond-price / basis covariance
  kernels numerically.
* :func:`mc_repo_rate` and :func:`mc_convexity` simulate the two-factor model
  with exact Gaussian transitions and price the repo from its zero-value
  condition, with no use of the closed-form adjustments.

Random numbers come from a Philox counter stream positioned by path index, so
results do not depend on how paths are split into blocks or threads.
"""

from __future__ import annotations

import bisect
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from functools import lru_cache
from typing import Optional

import numpy as np
from scipy import linalg, special

from .convexity import ModelParams, RepoSchedule
from .curves import DiscountCurve

_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(32)


class CalibrationError(ValueError):
    pass


# ---------------------------------------------------------------------------
# quadrature


def _gauss_legendre(f, a: float, b: float, decay: float) -> float:
    """Composite 32-point Gauss-Legendre; panel count grows with the decay rate."""
    if b <= a:
        return 0.0
    panels = max(1, math.ceil(decay * (b - a) / 2.0))
    edges = np.linspace(a, b, panels + 1)
    half = 0.5 * np.diff(edges)[:, None]
    mid = 0.5 * (edges[1:] + edges[:-1])[:, None]
    x = mid + half * _GL_NODES[None, :]
    return float(np.sum(half * _GL_WEIGHTS[None, :] * f(x)))


def _one_minus_exp_over(rate: float, w):
    # (1 - exp(-rate w)) / rate, = w at rate 0
    w = np.asarray(w, dtype=float)
    if rate == 0.0:
        return w
    if np.all(np.isinf(w)):
        return np.full_like(w, 1.0 / rate)
    return -np.expm1(-rate * w) / rate


def quadrature_covariance(params: ModelParams, schedule: RepoSchedule) -> float:
    """Convexity adjustment as -Cov(basis integral, log bond-price ratio), by quadrature."""
    t, s, e, T = schedule.fix, schedule.start, schedule.end, schedule.bond_maturity
    th, ka = params.theta, params.kappa
    if params.scale == 0.0:
        return 0.0
    if math.isinf(T) and th == 0.0:
        raise ValueError("infinite bond maturity needs theta > 0")
    decay = th + ka

    def end_kernel(u):
        return np.exp(-th * (e - u)) * _one_minus_exp_over(ka, e - u)

    def start_kernel(u):
        return np.exp(-th * (s - u)) * _one_minus_exp_over(ka, e - u)

    end_part = _one_minus_exp_over(th, T - e) * _gauss_legendre(end_kernel, t, e, decay)
    start_part = _one_minus_exp_over(th, T - s) * _gauss_legendre(start_kernel, t, s, decay)
    return params.scale * float(end_part - start_part)


# ---------------------------------------------------------------------------
# exact OU transitions


@lru_cache(maxsize=256)
def _unit_transition(theta: float, kappa: float, rho: float, h: float):
    """Transition of (x, y, int x, int y) for unit-vol OU factors over a step h.

    dx = -theta x dt + dW1, dy = -kappa y dt + dW2, dW1 dW2 = rho dt. Mean map
    and covariance come from one block matrix exponential (Van Loan).
    """
    drift = np.array(
        [
            [-theta, 0.0, 0.0, 0.0],
            [0.0, -kappa, 0.0, 0.0],
            [1.0, 0.0, 0.0, 0.0],
            [0.0, 1.0, 0.0, 0.0],
        ]
    )
    noise = np.zeros((4, 4))
    noise[:2, :2] = [[1.0, rho], [rho, 1.0]]
    block = np.zeros((8, 8))
    block[:4, :4] = -drift
    block[:4, 4:] = noise
    block[4:, 4:] = drift.T
    big = linalg.expm(block * h)
    mean_map = big[4:, 4:].T
    cov = mean_map @ big[:4, 4:]
    cov = 0.5 * (cov + cov.T)
    mean_map.setflags(write=False)
    cov.setflags(write=False)
    return mean_map, cov


def ou_transition(params: ModelParams, h: float) -> tuple[np.ndarray, np.ndarray]:
    """Mean map and covariance of (x_h, y_h, int_0^h x, int_0^h y) given the state at 0.

    x and y are the zero-mean parts of the bond rate and the basis, with
    volatilities sigma and epsilon.
    """
    if h < 0.0:
        raise ValueError(f"negative step {h}")
    mean_map, cov = _unit_transition(params.theta, params.kappa, params.rho, float(h))
    vols = np.array([params.sigma, params.epsilon, params.sigma, params.epsilon])
    return mean_map.copy(), cov * np.outer(vols, vols)


def _integrated_variances(params: ModelParams, h: float) -> tuple[float, float]:
    """Var(int x) and Var(int x + int y) over a horizon h."""
    _, cov = ou_transition(params, h)
    return cov[2, 2], cov[2, 2] + cov[3, 3] + 2.0 * cov[2, 3]


def _factor(cov: np.ndarray) -> np.ndarray:
    try:
        return np.linalg.cholesky(cov)
    except np.linalg.LinAlgError:
        # |rho| = 1 or a degenerate step; symmetric square root still samples exactly
        vals, vecs = np.linalg.eigh(cov)
        return vecs * np.sqrt(np.clip(vals, 0.0, None))


# ---------------------------------------------------------------------------
# deterministic shifts


@dataclass(frozen=True)
class PiecewiseConstant:
    knots: tuple[float, ...]
    values: tuple[float, ...]

    def __post_init__(self):
        if len(self.knots) != len(self.values) + 1:
            raise ValueError("need one value per knot interval")
        cum = [0.0]
        for i, v in enumerate(self.values):
            cum.append(cum[-1] + v * (self.knots[i + 1] - self.knots[i]))
        object.__setattr__(self, "_cum", tuple(cum))

    def __call__(self, x: float) -> float:
        return self.values[self._interval(x)]

    def _interval(self, x: float) -> int:
        if not self.knots[0] <= x <= self.knots[-1]:
            raise ValueError(f"{x} outside [{self.knots[0]}, {self.knots[-1]}]")
        return min(bisect.bisect_right(self.knots, x) - 1, len(self.values) - 1)

    def cumulative(self, x: float) -> float:
        i = self._interval(x)
        return self._cum[i] + self.values[i] * (x - self.knots[i])

    def integral(self, a: float, b: float) -> float:
        return self.cumulative(b) - self.cumulative(a)


@dataclass(frozen=True)
class ShiftFunctions:
    """Deterministic drifts: bond rate = bond_shift + x, basis = basis_shift + y."""

    bond_shift: PiecewiseConstant
    basis_shift: PiecewiseConstant

    @property
    def valuation_time(self) -> float:
        return self.bond_shift.knots[0]


def model_bond_df(shifts: ShiftFunctions, params: ModelParams, T: float) -> float:
    t0 = shifts.valuation_time
    var_r, _ = _integrated_variances(params, T - t0)
    return math.exp(-shifts.bond_shift.integral(t0, T) + 0.5 * var_r)


def model_derivative_df(shifts: ShiftFunctions, params: ModelParams, T: float) -> float:
    t0 = shifts.valuation_time
    _, var_total = _integrated_variances(params, T - t0)
    drift = shifts.bond_shift.integral(t0, T) + shifts.basis_shift.integral(t0, T)
    return math.exp(-drift + 0.5 * var_total)


def calibrate_shifts(
    bond_curve: DiscountCurve, derivative_curve: DiscountCurve, params: ModelParams
) -> ShiftFunctions:
    """Piecewise-constant drifts repricing both curves at their pillars.

    With Gaussian factors, E[exp(-int r)] = exp(-int shift + Var/2), so the
    integrated shift at each pillar is read off in closed form.
    """
    t0 = bond_curve.valuation_time
    if derivative_curve.valuation_time != t0:
        raise ValueError("curves have different valuation times")
    if not bond_curve.times or not derivative_curve.times:
        raise ValueError("calibration needs curves with pillars")
    if derivative_curve.last_time > bond_curve.last_time:
        raise ValueError("derivative curve extends beyond the bond curve")

    knots = bond_curve.knots
    target = [0.0]
    for T, df in zip(bond_curve.times, bond_curve.dfs):
        var_r, _ = _integrated_variances(params, T - t0)
        target.append(-math.log(df) + 0.5 * var_r)
    bond_shift = PiecewiseConstant(
        knots, tuple((target[i + 1] - target[i]) / (knots[i + 1] - knots[i]) for i in range(len(knots) - 1))
    )

    dknots = derivative_curve.knots
    target = [0.0]
    for T, df in zip(derivative_curve.times, derivative_curve.dfs):
        _, var_total = _integrated_variances(params, T - t0)
        target.append(-math.log(df) - bond_shift.integral(t0, T) + 0.5 * var_total)
    basis_shift = PiecewiseConstant(
        dknots, tuple((target[i + 1] - target[i]) / (dknots[i + 1] - dknots[i]) for i in range(len(dknots) - 1))
    )

    shifts = ShiftFunctions(bond_shift, basis_shift)
    for curve, model in ((bond_curve, model_bond_df), (derivative_curve, model_derivative_df)):
        for T, df in zip(curve.times, curve.dfs):
            resid = abs(model(shifts, params, T) / df - 1.0)
            if resid > 1e-10:
                raise CalibrationError(f"calibration residual {resid:.3e} at T={T}")
    return shifts


# ---------------------------------------------------------------------------
# simulation


@dataclass(frozen=True)
class SimConfig:
    """Monte Carlo settings.

    ``steps`` splits [t, e] into that many exact transitions (the repo start
    is always a step boundary); ``workers`` threads share the path blocks.
    Neither ``block_size`` nor ``workers`` changes the numbers produced.
    """

    n_paths: int
    seed: int = 42
    block_size: int = 65536
    workers: int = 1
    steps: int = 1

    def __post_init__(self):
        if self.n_paths < 1:
            raise ValueError(f"n_paths must be >= 1, got {self.n_paths}")
        if not 0 <= self.seed < 2**64:
            raise ValueError(f"seed must be a 64-bit unsigned integer, got {self.seed}")
        if self.block_size < 1 or self.workers < 1 or self.steps < 1:
            raise ValueError("block_size, workers and steps must be positive")


@dataclass(frozen=True)
class SimResult:
    estimate: float
    std_error: float
    n_paths: int

    def converged(self, max_std_error: float) -> bool:
        return self.std_error <= max_std_error


def _uniforms_to_normals(raw: np.ndarray) -> np.ndarray:
    u = ((raw >> np.uint64(11)).astype(np.float64) + 0.5) * 2.0**-53
    return special.ndtri(u)


def _path_normals(seed: int, first_path: int, n: int, dim: int) -> np.ndarray:
    """Standard normals for paths [first_path, first_path + n), ``dim`` per path.

    Path i always consumes raw draws [i * dim', (i+1) * dim') of the Philox
    stream keyed by ``seed``, with dim' = dim rounded up to a multiple of 4.
    """
    per_path = 4 * math.ceil(dim / 4)
    gen = np.random.Philox(key=seed)
    gen.advance(first_path * per_path // 4)
    raw = gen.random_raw(n * per_path).reshape(n, per_path)[:, :dim]
    return _uniforms_to_normals(raw)


def _time_grid(t: float, s: float, e: float, steps: int) -> list[float]:
    grid = list(np.linspace(t, e, steps + 1))
    grid[0], grid[-1] = t, e
    if s > t:
        tol = 1e-12 * max(1.0, abs(e))
        close = [i for i, x in enumerate(grid) if abs(x - s) <= tol]
        if close:
            grid[close[0]] = s
        else:
            bisect.insort(grid, s)
    return grid


@dataclass(frozen=True)
class _PathStates:
    x_start: np.ndarray
    x_end: np.ndarray
    int_x: np.ndarray
    int_y: np.ndarray


def simulate_states(
    params: ModelParams, t: float, s: float, e: float, config: SimConfig
) -> _PathStates:
    """Exact samples of (x_s, x_e, int_t^e x, int_t^e y) with both factors at 0 at t."""
    grid = _time_grid(t, s, e, config.steps)
    steps = []
    for a, b in zip(grid, grid[1:]):
        mean_map, cov = ou_transition(params, b - a)
        steps.append((mean_map.T.copy(), _factor(cov).T.copy(), b == s))
    dim = 4 * len(steps)
    n = config.n_paths
    out = np.empty((4, n))

    def run_block(first: int) -> None:
        count = min(config.block_size, n - first)
        z = _path_normals(config.seed, first, count, dim).reshape(count, len(steps), 4)
        state = np.zeros((count, 4))
        x_start = np.zeros(count)
        for k, (mean_t, chol_t, at_start) in enumerate(steps):
            state = state @ mean_t + z[:, k, :] @ chol_t
            if at_start:
                x_start = state[:, 0].copy()
        out[0, first : first + count] = x_start
        out[1, first : first + count] = state[:, 0]
        out[2, first : first + count] = state[:, 2]
        out[3, first : first + count] = state[:, 3]

    firsts = range(0, n, config.block_size)
    if config.workers == 1:
        for first in firsts:
            run_block(first)
    else:
        with ThreadPoolExecutor(max_workers=config.workers) as pool:
            list(pool.map(run_block, firsts))
    return _PathStates(out[0], out[1], out[2], out[3])


def _std_error(z: np.ndarray) -> float:
    if z.size < 2:
        return math.inf
    return float(np.std(z, ddof=1) / math.sqrt(z.size))


def _bond_loading(theta: float, h: float) -> float:
    return h if theta == 0.0 else -math.expm1(-theta * h) / theta


def _log_bond_ratio_drift(
    params: ModelParams, shifts: Optional[ShiftFunctions], s: float, e: float, T: float
) -> float:
    # deterministic part of log(pbar_e^T / pbar_s^T)
    var_e, _ = _integrated_variances(params, T - e)
    var_s, _ = _integrated_variances(params, T - s)
    drift = 0.0 if shifts is None else shifts.bond_shift.integral(s, e)
    return drift + 0.5 * (var_e - var_s)


def _log_bond_ratio_noise(params: ModelParams, states: _PathStates, s: float, e: float, T: float):
    th = params.theta
    return _bond_loading(th, T - s) * states.x_start - _bond_loading(th, T - e) * states.x_end


def mc_repo_rate(
    bond_curve: DiscountCurve,
    derivative_curve: DiscountCurve,
    params: ModelParams,
    schedule: RepoSchedule,
    config: SimConfig,
) -> SimResult:
    """Repo rate giving zero time-t value to the repo cashflows, by simulation.

    ``1 + f delta = E[D_e pbar_e^T / pbar_s^T] / E[D_e]`` with D_e the
    derivative discount factor to e. The fixing must be the valuation time.
    """
    t, s, e, T = schedule.fix, schedule.start, schedule.end, schedule.bond_maturity
    if t != bond_curve.valuation_time:
        raise ValueError("simulation prices as of the curve valuation time; fixing must equal it")
    if T > bond_curve.last_time or e > derivative_curve.last_time:
        raise ValueError("schedule extends beyond the curves")
    shifts = calibrate_shifts(bond_curve, derivative_curve, params)
    states = simulate_states(params, t, s, e, config)

    discount = np.exp(-(states.int_x + states.int_y))
    ratio = np.exp(_log_bond_ratio_noise(params, states, s, e, T))
    weighted = discount * ratio
    m_disc = float(np.mean(discount))
    m_weighted = float(np.mean(weighted))
    scale = math.exp(_log_bond_ratio_drift(params, shifts, s, e, T))
    gross = scale * m_weighted / m_disc
    z = (weighted - (m_weighted / m_disc) * discount) / m_disc
    return SimResult(
        (gross - 1.0) / schedule.accrual,
        scale * _std_error(z) / schedule.accrual,
        config.n_paths,
    )


def mc_convexity(
    params: ModelParams,
    schedule: RepoSchedule,
    config: SimConfig,
    shifts: Optional[ShiftFunctions] = None,
) -> SimResult:
    """Log convexity adjustment from its four risk-neutral expectations.

    ``C = log(E[e^{-R-B} P] E[e^{-R}] / (E[e^{-R-B}] E[e^{-R} P]))`` with R, B
    the bond-rate and basis integrals over [t, e] and P the bond price ratio.
    ``shifts`` adds deterministic drifts, which cancel in C.
    """
    t, s, e, T = schedule.fix, schedule.start, schedule.end, schedule.bond_maturity
    if math.isinf(T):
        raise ValueError("simulation needs a finite bond maturity")
    states = simulate_states(params, t, s, e, config)
    r_int = states.int_x
    b_int = states.int_y
    log_ratio = _log_bond_ratio_noise(params, states, s, e, T) + _log_bond_ratio_drift(
        params, shifts, s, e, T
    )
    if shifts is not None:
        r_int = r_int + shifts.bond_shift.integral(t, e)
        b_int = b_int + shifts.basis_shift.integral(t, e)

    y_r = np.exp(-r_int)
    y_rb = np.exp(-(r_int + b_int))
    y_rbp = y_rb * np.exp(log_ratio)
    y_rp = y_r * np.exp(log_ratio)
    means = [float(np.mean(y)) for y in (y_rbp, y_r, y_rb, y_rp)]
    estimate = math.log((means[0] * means[1]) / (means[2] * means[3]))
    z = y_rbp / means[0] + y_r / means[1] - y_rb / means[2] - y_rp / means[3]
    return SimResult(estimate, _std_error(z), config.n_paths)
