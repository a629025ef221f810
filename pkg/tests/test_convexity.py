import math

import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st

from conftest import literal_b
from repoconvexity.convexity import (
    INFINITE_MATURITY,
    ModelParams,
    RepoSchedule,
    b_function,
    compute_adjustments,
    convexity_adjustment,
    forwardness_adjustment,
    liquidity_adjustment,
    maturity_adjustment,
)
from repoconvexity.oracle import quadrature_covariance

# Limits at theta, kappa -> 0, derived symbolically:
#   B -> delta (delta mu - 2 delta tau - tau^2) / 2
#   M -> rho sigma eps mu (e - t)^2 / 2
#   F -> -rho sigma eps (T - s)(e - s)(s - t)


def b_limit(tau, delta, mu):
    return delta * (delta * mu - 2 * delta * tau - tau * tau) / 2


rates = st.one_of(st.sampled_from([0.0, 1e-10, 1e-8, 1e-4]), st.floats(0.0, 1.0))
params_st = st.builds(
    ModelParams,
    sigma=st.floats(0.0, 0.03),
    epsilon=st.floats(0.0, 0.03),
    theta=rates,
    kappa=rates,
    rho=st.floats(-1.0, 1.0),
)


@st.composite
def schedules(draw, max_gap=20.0):
    t = draw(st.floats(0.0, 5.0))
    tau = draw(st.one_of(st.just(0.0), st.floats(0.0, max_gap)))
    delta = draw(st.floats(0.01, 3.0))
    mu = draw(st.one_of(st.just(0.0), st.floats(0.0, 30.0)))
    s = t + tau
    e = s + delta
    assume(s < e)
    return RepoSchedule(t, s, e, e + mu, delta)


class TestBFunction:
    def test_zero_forwardness_limit(self):
        assert b_function(0.0, 2.0, 3.0, 0.0, 0.0) == 6.0

    def test_forward_starting_limit(self):
        assert b_function(1.0, 1.0, 1.0, 0.0, 0.0) == -1.0

    def test_matches_quadrature(self):
        params = ModelParams(1.0, 1.0, 0.03, 0.1, 1.0)
        sched = RepoSchedule(0.0, 1.0, 1.25, 10.0, 0.25)
        assert b_function(1.0, 0.25, 8.75, 0.03, 0.1) == pytest.approx(
            quadrature_covariance(params, sched), rel=1e-10
        )

    @pytest.mark.parametrize("tau, delta, mu", [(0, 2, 3), (1, 1, 1), (2.5, 0.25, 7.25), (0.5, 1.5, 0)])
    def test_symbolic_limit(self, tau, delta, mu):
        assert b_function(tau, delta, mu, 0.0, 0.0) == pytest.approx(b_limit(tau, delta, mu), rel=1e-14, abs=1e-15)

    @pytest.mark.parametrize(
        "theta, kappa",
        [(1e-7, 0.1), (0.1, 1e-7), (1e-7, 1e-7), (0.03, 0.03), (0.5, 0.5), (1e-7, 0.0), (0.0, 1e-7)],
    )
    @pytest.mark.parametrize("tau, delta, mu", [(1, 0.25, 8.75), (0, 1, 4), (5, 2, 20), (0.1, 0.1, 0.1)])
    def test_near_singular_against_high_precision(self, theta, kappa, tau, delta, mu):
        if theta == 0.0 or kappa == 0.0:
            # literal form divides by zero; compare with a tiny positive rate instead
            ref = literal_b(tau, delta, mu, theta or 1e-30, kappa or 1e-30)
        else:
            ref = literal_b(tau, delta, mu, theta, kappa)
        assert b_function(tau, delta, mu, theta, kappa) == pytest.approx(ref, rel=1e-9)

    def test_broadcasts(self):
        vals = b_function([0.0, 1.0], 1.0, [3.0, 1.0], [0.0, 0.03], [0.0, 0.1])
        assert vals[0] == b_function(0.0, 1.0, 3.0, 0.0, 0.0)
        assert vals[1] == pytest.approx(b_function(1.0, 1.0, 1.0, 0.03, 0.1), rel=1e-14)

    @pytest.mark.parametrize("args", [(-1, 1, 1, 0, 0), (0, 0, 1, 0, 0), (0, 1, -1, 0, 0), (0, 1, 1, -0.1, 0)])
    def test_rejects_negative(self, args):
        with pytest.raises(ValueError):
            b_function(*args)

    def test_infinite_maturity(self):
        finite = b_function(1.0, 0.25, 1e6, 0.03, 0.1)
        assert b_function(1.0, 0.25, math.inf, 0.03, 0.1) == pytest.approx(finite, rel=1e-14)


class TestConvexityAdjustment:
    def test_zero_correlation(self, reference_schedule):
        assert convexity_adjustment(ModelParams(0.01, 0.005, 0.03, 0.1, 0.0), reference_schedule) == 0.0

    def test_spot_repo_to_maturity(self, reference_params):
        assert convexity_adjustment(reference_params, RepoSchedule(1, 1, 2, 2, 1)) == 0.0

    def test_decomposes(self, reference_params, reference_schedule):
        t, s, e, T = 0.0, 1.0, 1.25, 10.0
        c = convexity_adjustment(reference_params, reference_schedule)
        pieces = (
            maturity_adjustment(reference_params, t, e, T)
            - maturity_adjustment(reference_params, t, s, T)
            + forwardness_adjustment(reference_params, t, s, e, T)
        )
        assert abs(c - pieces) < 1e-14

    def test_infinite_maturity_needs_mean_reversion(self):
        params = ModelParams(0.01, 0.005, 0.0, 0.1, 0.5)
        with pytest.raises(ValueError):
            convexity_adjustment(params, RepoSchedule(0, 1, 2, INFINITE_MATURITY, 1))


class TestMaturityAdjustment:
    def test_repo_to_maturity(self, reference_params):
        assert maturity_adjustment(reference_params, 0.0, 3.0, 3.0) == 0.0

    def test_small_rate_limit(self):
        params = ModelParams(0.01, 0.005, 0.0, 0.0, 0.5)
        assert maturity_adjustment(params, 0.5, 2.0, 7.0) == pytest.approx(
            0.5 * 0.01 * 0.005 * 5.0 * 1.5**2 / 2, rel=1e-14
        )

    def test_positive_for_positive_correlation(self):
        params = ModelParams(0.01, 0.005, 0.03, 0.1, 0.5)
        sched = RepoSchedule(0.0, 0.0, 2.0, 10.0, 2.0)
        m = maturity_adjustment(params, 0.0, 2.0, 10.0)
        assert m > 0.0
        assert m == pytest.approx(quadrature_covariance(params, sched), rel=1e-10)

    def test_rejects_bond_before_end(self, reference_params):
        with pytest.raises(ValueError):
            maturity_adjustment(reference_params, 0.0, 3.0, 2.0)


class TestForwardnessAdjustment:
    def test_spot_starting(self, reference_params):
        assert forwardness_adjustment(reference_params, 1.0, 1.0, 2.0, 5.0) == 0.0

    def test_small_rate_limit(self):
        params = ModelParams(0.01, 0.005, 0.0, 0.0, 0.5)
        assert forwardness_adjustment(params, 0.0, 1.0, 1.5, 4.0) == pytest.approx(
            -0.5 * 0.01 * 0.005 * 3.0 * 0.5 * 1.0, rel=1e-14
        )

    def test_negative_for_positive_correlation(self):
        params = ModelParams(0.01, 0.005, 0.03, 0.1, 0.5)
        assert forwardness_adjustment(params, 0.0, 1.0, 2.0, 5.0) < 0.0

    def test_ordering(self, reference_params):
        with pytest.raises(ValueError):
            forwardness_adjustment(reference_params, 1.0, 0.5, 2.0, 5.0)


class TestLiquidity:
    @pytest.mark.parametrize("mean, std, expected", [(0, 0, 0), (0.001, 0.02, 0.0012), (-0.002, 0, -0.002)])
    def test_values(self, mean, std, expected):
        assert liquidity_adjustment(mean, std) == pytest.approx(expected, abs=1e-18)

    def test_negative_std(self):
        with pytest.raises(ValueError):
            liquidity_adjustment(0.0, -0.01)


class TestComputeAdjustments:
    def test_all_zero(self, reference_schedule):
        adj = compute_adjustments(ModelParams(0.01, 0.005, 0.03, 0.1, 0.0), reference_schedule)
        assert (adj.liquidity, adj.maturity_end, adj.maturity_start, adj.forwardness, adj.total) == (0, 0, 0, 0, 0)

    def test_spot_starting(self, reference_params):
        adj = compute_adjustments(reference_params, RepoSchedule(0, 0, 1, 5, 1))
        assert adj.forwardness == 0.0
        assert adj.total == pytest.approx(adj.maturity_end - adj.maturity_start, abs=1e-18)

    def test_liquidity_passed_through(self, reference_params, reference_schedule):
        assert compute_adjustments(reference_params, reference_schedule, 0.001, 0.02).liquidity == pytest.approx(0.0012)


class TestParamsAndSchedule:
    @pytest.mark.parametrize("kw", [dict(sigma=-0.01), dict(theta=-1), dict(rho=1.5), dict(kappa=math.nan)])
    def test_params_invalid(self, kw):
        base = dict(sigma=0.01, epsilon=0.005, theta=0.03, kappa=0.1, rho=0.0)
        with pytest.raises(ValueError):
            ModelParams(**{**base, **kw})

    @pytest.mark.parametrize("dates", [(1, 0.5, 2, 3, 1), (0, 1, 1, 3, 1), (0, 1, 2, 1.5, 1), (0, 1, 2, 3, 0)])
    def test_schedule_invalid(self, dates):
        with pytest.raises(ValueError):
            RepoSchedule(*dates)

    def test_parse(self):
        assert RepoSchedule.parse("0, 1, 1.25, inf, 0.25") == RepoSchedule(0, 1, 1.25, math.inf, 0.25)
        with pytest.raises(ValueError):
            RepoSchedule.parse("0,1,2")
        with pytest.raises(ValueError):
            RepoSchedule.parse("0,1,x,3,1")


# --- properties -----------------------------------------------------------


@settings(max_examples=400, deadline=None)
@given(params_st, schedules())
def test_decomposition_identity(params, sched):
    adj = compute_adjustments(params, sched)
    assert abs(adj.residual) < 1e-14


@settings(max_examples=200, deadline=None)
@given(params_st, schedules())
def test_boundary_identities_exact(params, sched):
    t, s, e, T = sched.fix, sched.start, sched.end, sched.bond_maturity
    assert convexity_adjustment(params, RepoSchedule(s, s, e, e, sched.accrual)) == 0.0
    assert maturity_adjustment(params, t, e, e) == 0.0
    assert forwardness_adjustment(params, t, t, e, T) == 0.0


@settings(max_examples=200, deadline=None)
@given(params_st, schedules(), st.floats(0.1, 5.0), st.floats(0.1, 5.0), st.floats(0.1, 1.0))
def test_bilinear_in_rho_sigma_epsilon(params, sched, a, b, c):
    base = convexity_adjustment(params, sched)
    for kw, factor in (("sigma", a), ("epsilon", b)):
        scaled = ModelParams(**{**params.__dict__, kw: getattr(params, kw) * factor})
        assert convexity_adjustment(scaled, sched) == pytest.approx(base * factor, rel=1e-12, abs=1e-300)
    damped = ModelParams(**{**params.__dict__, "rho": params.rho * c})
    assert convexity_adjustment(damped, sched) == pytest.approx(base * c, rel=1e-12, abs=1e-300)


@settings(max_examples=200, deadline=None)
@given(
    st.floats(1e-3, 0.05), st.floats(1e-3, 0.05), rates, rates, st.floats(0.01, 1.0),
    st.floats(0.0, 5.0), st.floats(0.01, 10.0), st.floats(0.01, 10.0), st.floats(0.01, 30.0),
)
def test_sign_for_positive_correlation(sigma, epsilon, theta, kappa, rho, t, tau, delta, mu):
    params = ModelParams(sigma, epsilon, theta, kappa, rho)
    s, e = t + tau, t + tau + delta
    assert maturity_adjustment(params, t, e, e + mu) > 0.0
    assert forwardness_adjustment(params, t, s, e, e + mu) < 0.0


@pytest.mark.parametrize("which", ["theta", "kappa", "both"])
def test_continuity_at_singular_rates(which):
    # values at 1e-7 against the literal formula evaluated in 60-digit arithmetic
    grid = [(tau, delta, mu) for tau in (0.0, 0.5, 3.0) for delta in (0.25, 1.0) for mu in (0.0, 2.0, 25.0)]
    for tau, delta, mu in grid:
        theta = 1e-7 if which in ("theta", "both") else 0.05
        kappa = 1e-7 if which in ("kappa", "both") else 0.05
        if which == "both":
            kappa = 2e-7
        got = b_function(tau, delta, mu, theta, kappa)
        ref = literal_b(tau, delta, mu, theta, kappa)
        assert abs(got - ref) < 1e-9 * max(1.0, abs(ref))
