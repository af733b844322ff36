import numpy as np
import pytest
from numpy.testing import assert_allclose
from scipy.integrate import quad
from scipy.linalg import expm

from attrition import (DegenerateRates, DomainError, RateSequence, ess_rates,
                       expected_duration, hypoexp_density, make_prize,
                       mean_prize_parts, mean_quit_fraction, state_probs,
                       state_probs_grid, transition_matrix, var_quit_fraction)
from attrition.dynamic_model import _relative_gap


def _rate_seq(rates):
    rates = np.asarray(rates, dtype=float)
    return RateSequence(rates=rates, N=len(rates), pairwise_distinct=True,
                        min_rel_gap=_relative_gap(rates))


def _generator(rates):
    n = len(rates)
    Q = np.zeros((n, n))
    for i in range(n - 1):
        Q[i, i] = -rates[i]
        Q[i, i + 1] = rates[i]
    Q[-1, -1] = -rates[-1]
    return Q


def test_ess_rates_two_players():
    spec = make_prize("table", 2, knots=[(0, 0), (0.5, 0.5), (1, 1.0)])
    r = ess_rates(spec)
    assert_allclose(r.rates, [4.0, 0.0])


def test_ess_rates_three_linear():
    r = ess_rates(make_prize("power", 3, alpha=1.0))
    assert_allclose(r.rates, [4.5, 6.0, 0.0])


@pytest.mark.parametrize("alpha,N", [(1.0, 5), (2.0, 8), (0.5, 13)])
def test_last_rate_is_zero(alpha, N):
    r = ess_rates(make_prize("power", N, alpha=alpha))
    assert r.rates[-1] == 0.0
    assert np.all(r.rates[:-1] > 0)


def test_degenerate_rates_flagged_not_fatal():
    # values chosen so lambda_1 == lambda_2 exactly
    spec = make_prize("table", 3, knots=[(0, 0), (1 / 3, 0.3), (2 / 3, 0.45), (1, 0.65)])
    r = ess_rates(spec)
    assert_allclose(r.rates[:2], [10.0, 10.0])
    assert not r.pairwise_distinct


# ---------------------------------------------------------------------------
# hypoexponential density


def test_hypoexp_single_rate():
    assert hypoexp_density([2.0], 0.5) == pytest.approx(2 * np.exp(-1.0))


def test_hypoexp_two_rates_vs_convolution():
    ts = np.linspace(0.0, 4.0, 17)
    vals = hypoexp_density([1.0, 2.0], ts)
    assert_allclose(vals, 2 * np.exp(-ts) - 2 * np.exp(-2 * ts), atol=1e-13)
    # independent oracle: numerical convolution of the two exponentials
    for t in (0.3, 1.0, 2.5):
        conv, _ = quad(lambda s: np.exp(-s) * 2 * np.exp(-2 * (t - s)), 0, t)
        assert hypoexp_density([1.0, 2.0], t) == pytest.approx(conv, abs=1e-10)


def test_hypoexp_integrates_to_one():
    rng = np.random.default_rng(5)
    rates = np.sort(rng.uniform(0.5, 10.0, 12))
    while _relative_gap(rates) <= 0.05:
        rates = np.sort(rng.uniform(0.5, 10.0, 12))
    total, _ = quad(lambda t: hypoexp_density(rates, t), 0, np.inf, limit=200)
    assert total == pytest.approx(1.0, abs=1e-8)


def test_hypoexp_rejects_close_rates():
    with pytest.raises(DegenerateRates):
        hypoexp_density([1.0, 1.0 + 1e-12], 0.5)
    with pytest.raises(DegenerateRates):
        hypoexp_density([1.0, -2.0], 0.5)


def test_hypoexp_negative_time_rejected():
    with pytest.raises(DomainError):
        hypoexp_density([1.0, 2.0], -0.1)


def test_hypoexp_nonnegative_everywhere():
    rates = [0.7, 1.9, 3.1, 6.5]
    ts = np.linspace(0, 20, 401)
    assert np.all(hypoexp_density(rates, ts) >= 0)


# ---------------------------------------------------------------------------
# state probabilities


def test_state_probs_initial_condition():
    r = ess_rates(make_prize("power", 6, alpha=1.0))
    p = state_probs(r, 0.0).probs
    assert_allclose(p, np.eye(6)[0], atol=1e-14)


def test_state_probs_absorbs():
    r = ess_rates(make_prize("power", 5, alpha=2.0))
    p = state_probs(r, 50.0).probs
    assert p[-1] == pytest.approx(1.0, abs=1e-10)


def test_state_probs_matches_matrix_exponential_small():
    spec = make_prize("power", 3, alpha=1.0)
    r = ess_rates(spec)
    p = state_probs(r, 0.1).probs
    oracle = expm(_generator(r.rates) * 0.1)[0]
    assert_allclose(p, oracle, atol=1e-9)


def test_state_probs_fallback_matches_oracle():
    # alpha=2 rates at N=25 break the partial fractions; the ODE fallback
    # must still match a matrix-exponential oracle
    spec = make_prize("power", 25, alpha=2.0)
    r = ess_rates(spec)
    p = state_probs(r, 0.3).probs
    oracle = expm(_generator(r.rates) * 0.3)[0]
    assert_allclose(p, oracle, atol=1e-8)
    assert abs(p.sum() - 1) <= 1e-10


@pytest.mark.parametrize("alpha,N", [(2.0, 12), (1.0, 60)])
def test_state_probs_invariants_on_grid(alpha, N):
    r = ess_rates(make_prize("power", N, alpha=alpha))
    ts = np.linspace(0.0, 2.0, 21)
    probs = state_probs_grid(r, ts)
    assert np.all(probs >= 0)
    assert_allclose(probs.sum(axis=1), 1.0, atol=1e-10)
    assert np.all(np.diff(probs[:, 0]) <= 1e-12)       # p_1 non-increasing
    assert np.all(np.diff(probs[:, -1]) >= -1e-12)      # p_N non-decreasing


def test_kolmogorov_forward_residual():
    rng = np.random.default_rng(2)
    rates = np.concatenate([np.sort(rng.uniform(0.5, 10.0, 5))[::-1], [0.0]])
    r = _rate_seq(rates)
    h = 1e-5
    for t in (0.2, 0.7):
        pm = state_probs(r, t - h).probs
        pp = state_probs(r, t + h).probs
        p = state_probs(r, t).probs
        lhs = (pp - pm) / (2 * h)
        rhs = -rates * p
        rhs[1:] += rates[:-1] * p[:-1]
        assert np.max(np.abs(lhs - rhs)) <= 1e-7


# ---------------------------------------------------------------------------
# moments


def test_moments_at_zero_and_infinity():
    r = ess_rates(make_prize("power", 7, alpha=1.0))
    assert mean_quit_fraction(r, 0.0) == 0.0
    assert var_quit_fraction(r, 0.0) == 0.0
    assert mean_quit_fraction(r, 60.0) == pytest.approx(6 / 7, abs=1e-9)


def test_mean_is_nondecreasing():
    r = ess_rates(make_prize("power", 9, alpha=2.0))
    ts = np.linspace(0, 1.5, 16)
    means = [mean_quit_fraction(r, t) for t in ts]
    assert np.all(np.diff(means) >= -1e-12)


def test_mean_approaches_square_root():
    spec = make_prize("power", 200, alpha=2.0)
    r = ess_rates(spec)
    assert mean_quit_fraction(r, 0.25) == pytest.approx(0.5, abs=0.05)


def test_convergence_rate_improves_with_n():
    errs = []
    for N in (25, 50, 100, 200):
        r = ess_rates(make_prize("power", N, alpha=2.0))
        ts = np.linspace(1e-9, 0.9, 61)
        probs = state_probs_grid(r, ts)
        ex = probs @ (np.arange(N) / N)
        errs.append(np.max(np.abs(ex - np.sqrt(ts))))
    assert all(b < a for a, b in zip(errs, errs[1:]))


# ---------------------------------------------------------------------------
# split prize expectation


def test_prize_parts_zero_at_start():
    spec = make_prize("power", 12, alpha=1.0)
    r = ess_rates(spec)
    assert mean_prize_parts(r, spec, 0.0, 0.25) == (0.0, 0.0)


def test_prize_parts_bulk_tracks_time():
    spec = make_prize("power", 200, alpha=1.0)
    r = ess_rates(spec)
    bulk, tail = mean_prize_parts(r, spec, 0.5, 0.1)
    assert bulk == pytest.approx(0.5, abs=0.05)
    assert tail >= 0.0


def test_prize_parts_tail_l1_bound():
    # L1 norm over [0, V(1)) is at most eps*sup|V V'| plus an O(1/N) term;
    # the margin 2/N covers the measured constant
    spec = make_prize("power", 200, alpha=1.0)
    r = ess_rates(spec)
    eps = 0.1
    ts = np.linspace(0.0, 1.0, 81)[:-1]
    tails = np.array([mean_prize_parts(r, spec, t, eps)[1] for t in ts])
    l1 = np.trapezoid(tails, ts)
    assert l1 <= eps * 1.0 + 2.0 / spec.N


def test_prize_parts_epsilon_validation():
    spec = make_prize("power", 6, alpha=1.0)
    r = ess_rates(spec)
    with pytest.raises(DomainError):
        mean_prize_parts(r, spec, 0.1, 0.0)


# ---------------------------------------------------------------------------
# expected duration


def test_duration_two_players():
    assert expected_duration(make_prize("power", 2, alpha=1.0)) == pytest.approx(0.25)


def test_duration_termwise_bound():
    spec = make_prize("power", 9, alpha=1.4)
    t = expected_duration(spec)
    v = spec.values
    assert t < (v[-1] - v[0]) + (v[1] - v[0])


def test_duration_independent_recompute():
    spec = make_prize("power", 57, alpha=0.7)
    acc = 0.0
    for k in range(1, 57):
        acc += (57 - k) / (57 - k + 1) * (spec.values[k] - spec.values[k - 1])
    assert expected_duration(spec) == pytest.approx(acc, rel=1e-14)


def test_duration_gap_shrinks_with_n():
    gaps = [abs(expected_duration(make_prize("power", n, alpha=2.0)) - 1.0)
            for n in (25, 50, 100, 200)]
    assert all(b < a for a, b in zip(gaps, gaps[1:]))


# ---------------------------------------------------------------------------
# transition matrix


def test_transition_matrix_identity_at_zero():
    r = _rate_seq([3.0, 1.5, 0.7, 0.0])
    assert_allclose(transition_matrix(r, 0.0).entries, np.eye(4), atol=1e-12)


def test_transition_matrix_against_expm():
    rng = np.random.default_rng(3)
    rates = np.concatenate([np.sort(rng.uniform(0.5, 10.0, 5))[::-1], [0.0]])
    r = _rate_seq(rates)
    P = transition_matrix(r, 0.3).entries
    assert_allclose(P, expm(_generator(rates) * 0.3), atol=1e-8)
    assert_allclose(P.sum(axis=1), 1.0, atol=1e-9)
    assert np.all(P >= 0)
    assert np.all(np.tril(P, -1) == 0)


def test_transition_matrix_semigroup():
    rng = np.random.default_rng(7)
    rates = np.concatenate([np.sort(rng.uniform(0.5, 10.0, 5))[::-1], [0.0]])
    r = _rate_seq(rates)
    Ps = transition_matrix(r, 0.2).entries
    Pt = transition_matrix(r, 0.5).entries
    Pst = transition_matrix(r, 0.7).entries
    assert np.max(np.abs(Ps @ Pt - Pst)) <= 1e-8


def test_transition_matrix_row_one_is_state_probs():
    rng = np.random.default_rng(11)
    rates = np.concatenate([np.sort(rng.uniform(0.5, 10.0, 5))[::-1], [0.0]])
    r = _rate_seq(rates)
    for t in (0.1, 0.6):
        assert_allclose(transition_matrix(r, t).entries[0],
                        state_probs(r, t).probs, atol=1e-9)


def test_transition_matrix_fallback_for_clustered_rates():
    # ess rates of the linear prize at N=20 defeat the closed form
    spec = make_prize("power", 20, alpha=1.0)
    r = ess_rates(spec)
    P = transition_matrix(r, 0.4).entries
    assert_allclose(P, expm(_generator(r.rates) * 0.4), atol=1e-8)
