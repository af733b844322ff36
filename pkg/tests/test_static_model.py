import math

import numpy as np
import pytest
from numpy.testing import assert_allclose

from attrition import (InvalidParameter, StepTooLarge, TailNotConverged,
                       certificate_functional, ess_certificate, ess_limit_error,
                       ess_ode_rhs, gamma_sum, invasion_gap, invasion_gap_closed,
                       invasion_gap_quadrature, invasion_rate_fit, make_prize,
                       payoff_pure_vs_ess, solve_ess_ode)

# one moderately sized curve shared by several tests
_SPEC25 = {}


def _curve(alpha, N, **kw):
    key = (alpha, N, tuple(sorted(kw.items())))
    if key not in _SPEC25:
        _SPEC25[key] = solve_ess_ode(make_prize("power", N, alpha=alpha), **kw)
    return _SPEC25[key]


# ---------------------------------------------------------------------------
# ODE right-hand side


def test_rhs_at_zero():
    spec = make_prize("power", 10, alpha=0.5)
    expected = 1.0 / ((spec.N - 1) * spec.diffs[0])
    assert ess_ode_rhs(spec, 0.0) == pytest.approx(expected, rel=1e-13)


def test_rhs_at_one_is_zero():
    assert ess_ode_rhs(make_prize("power", 10, alpha=2.0), 1.0) == 0.0


def test_rhs_linear_prize_closed_form():
    # constant diffs 1/N turn the weighted sum into a plain average
    N = 17
    spec = make_prize("power", N, alpha=1.0)
    xs = np.linspace(0.0, 1.0, 31)
    expected = (1 - xs ** (N - 1)) * N / (N - 1)
    assert_allclose(ess_ode_rhs(spec, xs), expected, rtol=1e-11)


def test_rhs_positive_inside_unit_interval():
    for alpha in (0.5, 1.0, 2.0):
        spec = make_prize("power", 25, alpha=alpha)
        xs = np.linspace(0.0, 1.0, 1001)[:-1]
        assert np.all(ess_ode_rhs(spec, xs) > 0)


# ---------------------------------------------------------------------------
# curve solving


def test_curve_starts_at_zero_and_saturates():
    curve = _curve(1.0, 10)
    assert curve.cdf[0] == 0.0
    assert curve.cdf[-1] >= 1 - 1e-12
    assert np.all(np.diff(curve.cdf) >= 0)
    assert np.all((curve.cdf >= 0) & (curve.cdf <= 1))
    assert curve.t_max >= curve.spec.v_max


def test_curve_initial_slope():
    curve = _curve(1.0, 10)
    spec = curve.spec
    slope = (curve.cdf[1] - curve.cdf[0]) / curve.step
    assert slope == pytest.approx(1.0 / ((spec.N - 1) * spec.diffs[0]), rel=1e-3)


def test_curve_density_consistent_with_rhs():
    curve = _curve(2.0, 8)
    assert_allclose(curve.density, ess_ode_rhs(curve.spec, curve.cdf), rtol=1e-12)


def test_halving_step_changes_little():
    spec = make_prize("power", 25, alpha=2.0)
    c1 = solve_ess_ode(spec, step=1e-4)
    c2 = solve_ess_ode(spec, step=5e-5)
    n = min(len(c1.cdf), (len(c2.cdf) + 1) // 2)
    assert np.max(np.abs(c1.cdf[:n] - c2.cdf[::2][:n])) < 1e-8


def test_absurd_step_raises_without_retries():
    spec = make_prize("power", 50, alpha=1.0)
    with pytest.raises(StepTooLarge):
        solve_ess_ode(spec, step=0.5, max_halvings=0)


def test_absurd_step_recovers_by_halving():
    spec = make_prize("power", 50, alpha=1.0)
    curve = solve_ess_ode(spec, step=0.5, max_halvings=8)
    assert curve.step < 0.5
    assert curve.cdf[-1] >= 1 - 1e-12


def test_step_validation():
    spec = make_prize("power", 5, alpha=1.0)
    with pytest.raises(InvalidParameter):
        solve_ess_ode(spec, step=-1.0)
    with pytest.raises(InvalidParameter):
        solve_ess_ode(spec, tail_tol=2.0)


# ---------------------------------------------------------------------------
# limit comparison


def test_limit_error_linear_prize():
    spec = make_prize("power", 200, alpha=1.0)
    curve = solve_ess_ode(spec)
    assert ess_limit_error(curve) <= 0.02


def test_limit_error_decreases_with_n():
    errs = [ess_limit_error(solve_ess_ode(make_prize("power", n, alpha=1.0)))
            for n in (10, 50, 200)]
    assert errs[2] < errs[1] < errs[0]


# ---------------------------------------------------------------------------
# certificate


def test_certificate_convex_nonnegative():
    vals, vmin, argmin = ess_certificate(_curve(2.0, 25))
    assert vmin >= -1e-9
    assert abs(vals[-1] - 1.0) <= 0.05


def test_certificate_concave_negative_at_start():
    curve = _curve(0.5, 25)
    vals, vmin, argmin = ess_certificate(curve)
    assert vals[0] < 0
    assert argmin == pytest.approx(0.0, abs=curve.step)
    assert abs(vals[-1] - 1.0) <= 0.05


def test_certificate_start_value_analytic():
    # at t=0 the certificate reduces to (N-2)(c_1-c_0) g(0) / 2
    curve = _curve(0.5, 25)
    spec = curve.spec
    expected = 0.5 * (spec.N - 2) * (spec.diffs[1] - spec.diffs[0]) * curve.density[0]
    assert ess_certificate(curve)[0][0] == pytest.approx(expected, rel=1e-12)


def test_functional_zero_perturbation():
    assert certificate_functional(_curve(2.0, 10), lambda t: np.zeros_like(t)) == 0.0


def test_functional_convex_nonnegative():
    curve = _curve(2.0, 10)
    for fn in (lambda t: np.exp(-t), lambda t: np.sin(t) ** 2):
        assert certificate_functional(curve, fn) >= 0.0


def test_functional_concave_negative_near_origin():
    curve = _curve(0.5, 25)
    vals, _, _ = ess_certificate(curve)
    t_cross = curve.grid[np.argmax(vals >= 0)]
    bump = np.where(curve.grid < t_cross, 1.0 - curve.grid / t_cross, 0.0)
    assert certificate_functional(curve, bump) < 0.0


def test_functional_rejects_bad_samples():
    with pytest.raises(InvalidParameter):
        certificate_functional(_curve(2.0, 10), np.ones(3))


# ---------------------------------------------------------------------------
# pure-strategy payoff


@pytest.mark.parametrize("alpha,N", [(0.5, 5), (1.0, 5), (2.0, 5)])
def test_payoff_starts_at_first_prize(alpha, N):
    curve = _curve(alpha, N)
    assert payoff_pure_vs_ess(curve, 0.0) == pytest.approx(curve.spec.values[0], abs=1e-12)


@pytest.mark.parametrize("alpha", [0.5, 1.0, 2.0])
def test_payoff_constant_in_x(alpha):
    curve = _curve(alpha, 5)
    idx = np.unique(np.linspace(0, len(curve.grid) - 1, 200).round().astype(int))
    vals = payoff_pure_vs_ess(curve, curve.grid[idx])
    spread = vals.max() - vals.min()
    assert spread <= 1e-6 * curve.spec.values[-1]
    # tail balance: waiting forever earns the same constant
    assert abs(payoff_pure_vs_ess(curve, curve.t_max) - vals[0]) <= 1e-6


# ---------------------------------------------------------------------------
# invasion gap


def test_gap_routes_agree():
    for alpha in (0.5, 1.0, 1.5):
        for n in (5, 10):
            curve = _curve(alpha, n)
            dq = invasion_gap_quadrature(curve)
            dc = invasion_gap_closed(curve)
            assert abs(dq.delta - dc.delta) <= 1e-6
            assert dq.delta == pytest.approx(dq.payoff_mixed - dq.payoff_quit_now, abs=1e-9)
            assert dc.delta == pytest.approx(dc.a_part + dc.c_part, abs=1e-12)


def test_gap_signs():
    assert invasion_gap(_curve(1.0, 4)).delta > 0
    assert invasion_gap(_curve(1.0, 10)).delta > 0
    assert invasion_gap(_curve(0.5, 10)).delta < 0
    assert invasion_gap(_curve(0.5, 10)).delta == pytest.approx(-0.02037427, abs=1e-6)
    assert invasion_gap(_curve(1.5, 10)).delta > 0


def test_gap_c_part_formula():
    for alpha in (0.5, 1.0, 1.5):
        rep = invasion_gap(_curve(alpha, 10))
        expected = -((1 / 10) ** alpha + (2 / 10) ** alpha) / 2
        assert rep.c_part == pytest.approx(expected, rel=1e-14)


def test_gap_a_part_vanishes_with_n():
    a_parts = [abs(invasion_gap_closed(_curve(1.0, n)).a_part) for n in (5, 10, 20)]
    assert a_parts[2] < a_parts[1] < a_parts[0]


def test_gap_preconditions():
    small = solve_ess_ode(make_prize("power", 3, alpha=1.0))
    with pytest.raises(InvalidParameter):
        invasion_gap_closed(small)
    assert invasion_gap(small).method == "quadrature"
    loose = solve_ess_ode(make_prize("power", 10, alpha=1.0), tail_tol=1e-6)
    with pytest.raises(InvalidParameter):
        invasion_gap_quadrature(loose)


def test_gap_tail_not_converged():
    loose = solve_ess_ode(make_prize("power", 20, alpha=0.5), tail_tol=1e-3)
    with pytest.raises(TailNotConverged):
        invasion_gap_closed(loose)


# ---------------------------------------------------------------------------
# gamma identity


def test_gamma_sum_known_values():
    assert gamma_sum(1, -1.0) == pytest.approx(0.5)
    assert gamma_sum(2, -1.0) == pytest.approx(1 / 3)


def _brute_gamma_sum(q, p):
    return sum(math.comb(q, k) * (-1) ** k / (k - p) for k in range(q + 1))


@pytest.mark.parametrize("q,p", [(3, -0.5), (5, 2.5), (4, -3.0), (7, 0.75), (2, -6.25)])
def test_gamma_sum_against_brute_force(q, p):
    assert gamma_sum(q, p) == pytest.approx(_brute_gamma_sum(q, p), rel=1e-12, abs=1e-12)


def test_gamma_sum_rejects_poles():
    for p in (0, 1.0, 5):
        with pytest.raises(InvalidParameter):
            gamma_sum(3, p)
    with pytest.raises(InvalidParameter):
        gamma_sum(0, -1.0)


# ---------------------------------------------------------------------------
# decay-rate fit


def test_rate_fit_linear_prize():
    fit = invasion_rate_fit(1.0, [20, 40, 80, 160])
    assert fit.slope_a == pytest.approx(-1.0, abs=0.05)
    assert fit.slope_c == pytest.approx(-1.0, abs=1e-6)
    assert np.all(np.diff(np.abs(fit.a_values)) < 0)


def test_rate_fit_validation():
    with pytest.raises(InvalidParameter):
        invasion_rate_fit(1.5, [20, 40, 80, 160])
    with pytest.raises(InvalidParameter):
        invasion_rate_fit(0.5, [20, 40, 80])
    with pytest.raises(InvalidParameter):
        invasion_rate_fit(0.5, [20, 40, 30, 80])
