"""Dynamic-model analysis: quitting as a pure-birth Markov chain.

With N players and prizes V_1 < ... < V_N, round k of the repeated game
ends after an exponential time with rate

    lambda_k = (N-k+1) / ((N-k) (V_{k+1} - V_k)),      lambda_N = 0,

so the quit count follows a finite pure-birth chain.  This module gives
the closed-form transient analysis (partial fractions, eigenvector form
of the transition matrix) with an automatic switch to direct integration
of the Kolmogorov forward equations whenever the closed forms are not
trustworthy: rates too close, N too large, or a failed self-check.  The
partial-fraction coefficients blow up combinatorially for clustered
rates, so the self-check is essential, not cosmetic.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.integrate import solve_ivp

from .errors import DegenerateRates, DomainError, NumericalInstability
from .prize import PrizeSpec

# Closed forms are attempted only below this size and with this much
# relative separation between rates; results are still validated and the
# ODE path is used whenever validation fails.
CLOSED_FORM_MAX_N = 40
MIN_RELATIVE_GAP = 1e-9

_NEG_CLAMP = 1e-12
_PROB_SUM_TOL = 1e-10
_ODE_RTOL = 1e-10
_ODE_ATOL = 1e-14


@dataclass(frozen=True)
class RateSequence:
    """ESS round rates lambda_1..lambda_N of the pure-birth chain (lambda_N = 0)."""

    rates: np.ndarray
    N: int
    pairwise_distinct: bool
    min_rel_gap: float


@dataclass(frozen=True)
class StateDistribution:
    """State probabilities p_i(t) = P{quit fraction = (i-1)/N} at one time."""

    t: float
    probs: np.ndarray


@dataclass(frozen=True)
class TransitionMatrix:
    """Row-stochastic transition matrix P(t) of the quit-count chain."""

    t: float
    entries: np.ndarray


def _relative_gap(rates: np.ndarray) -> float:
    lam = np.sort(rates)
    gaps = np.diff(lam) / np.maximum(np.abs(lam[1:]), np.abs(lam[:-1]))
    return float(np.min(gaps)) if len(gaps) else np.inf


def ess_rates(spec: PrizeSpec) -> RateSequence:
    """Round rates of the dynamic-model ESS chain for a prize ladder."""
    N = spec.N
    k = np.arange(1, N)
    lam = (N - k + 1) / ((N - k) * spec.diffs)
    rates = np.concatenate([lam, [0.0]])
    gap = _relative_gap(rates)
    return RateSequence(rates=rates, N=N, pairwise_distinct=gap > MIN_RELATIVE_GAP,
                        min_rel_gap=gap)


def hypoexp_density(rates, t):
    """Density of a sum of independent exponentials with distinct rates.

    Partial-fraction form: sum_l [prod_k rate_k / prod_{k!=l}(rate_k - rate_l)]
    * exp(-rate_l t).  Products are accumulated as log-magnitude plus sign
    to delay overflow.  Raises DegenerateRates when two rates are closer
    than the supported relative gap; negative outputs beyond rounding size
    raise NumericalInstability.
    """
    lam = np.asarray(rates, dtype=float)
    if lam.ndim != 1 or len(lam) == 0 or np.any(lam <= 0):
        raise DegenerateRates("rates must be a non-empty sequence of positive reals")
    if len(lam) > 1 and _relative_gap(lam) <= MIN_RELATIVE_GAP:
        raise DegenerateRates("rates too close for the partial-fraction form; "
                              "use the Kolmogorov ODE path instead")
    ts = np.asarray(t, dtype=float)
    if np.any(ts < 0):
        raise DomainError("hypoexponential density is supported on t >= 0")

    log_num = np.sum(np.log(lam))
    out = np.zeros(ts.shape if ts.ndim else (1,))
    coeff_peak = 0.0
    for l in range(len(lam)):
        diff = np.delete(lam, l) - lam[l]
        sign = np.prod(np.sign(diff)) if len(diff) else 1.0
        log_den = np.sum(np.log(np.abs(diff))) if len(diff) else 0.0
        coeff_peak = max(coeff_peak, np.exp(log_num - log_den))
        out += sign * np.exp(log_num - log_den - lam[l] * np.atleast_1d(ts))
    low = out.min() if out.size else 0.0
    # rounding noise scales with the largest partial-fraction coefficient
    noise = max(_NEG_CLAMP, 16 * len(lam) * np.finfo(float).eps * coeff_peak)
    if low < -noise:
        raise NumericalInstability(f"hypoexponential density went negative ({low:.3e}); "
                                   "rates are too ill-conditioned")
    out = np.maximum(out, 0.0)
    return float(out[0]) if ts.ndim == 0 else out


def _closed_state_probs(rates: np.ndarray, ts: np.ndarray) -> np.ndarray:
    """Partial-fraction p_i(t) for every requested t; no validation here."""
    N = len(rates)
    out = np.empty((len(ts), N))
    out[:, 0] = np.exp(-rates[0] * ts)
    log_rates = np.log(rates[:-1])
    for i in range(2, N + 1):
        lam = rates[:i]
        log_num = np.sum(log_rates[: i - 1])
        acc = np.zeros(len(ts))
        for l in range(i):
            diff = np.delete(lam, l) - lam[l]
            sign = np.prod(np.sign(diff))
            log_den = np.sum(np.log(np.abs(diff)))
            acc += sign * np.exp(log_num - log_den - lam[l] * ts)
        out[:, i - 1] = acc
    return out


def _ode_state_probs(rates: np.ndarray, ts: np.ndarray) -> np.ndarray:
    """Kolmogorov forward equations dp/dt = p.Q integrated to each t."""
    N = len(rates)
    p0 = np.zeros(N)
    p0[0] = 1.0
    order = np.argsort(ts)
    sorted_ts = ts[order]
    out = np.empty((len(ts), N))
    positive = sorted_ts > 0

    def rhs(_, p):
        dp = -rates * p
        dp[1:] += rates[:-1] * p[:-1]
        return dp

    if np.any(positive):
        t_eval = sorted_ts[positive]
        sol = solve_ivp(rhs, (0.0, t_eval[-1]), p0, t_eval=np.unique(t_eval),
                        method="DOP853", rtol=_ODE_RTOL, atol=_ODE_ATOL)
        lookup = {tv: sol.y[:, j] for j, tv in enumerate(sol.t)}
        vals = np.array([lookup[tv] for tv in t_eval])
    sorted_out = np.empty((len(ts), N))
    sorted_out[~positive] = p0
    if np.any(positive):
        sorted_out[positive] = vals
    out[order] = sorted_out
    return out


def _probs_valid(p: np.ndarray) -> bool:
    return bool(p.min() >= -_NEG_CLAMP and abs(p.sum() - 1.0) <= _PROB_SUM_TOL)


def state_probs_grid(rseq: RateSequence, ts) -> np.ndarray:
    """State probabilities on a grid of times, shape (len(ts), N)."""
    ts = np.atleast_1d(np.asarray(ts, dtype=float))
    if np.any(ts < 0):
        raise DomainError("state probabilities need t >= 0")
    closed_ok = rseq.pairwise_distinct and rseq.N <= CLOSED_FORM_MAX_N
    p = None
    if closed_ok:
        with np.errstate(over="ignore"):
            p = _closed_state_probs(rseq.rates, ts)
        if not all(_probs_valid(row) for row in p):
            p = None
    if p is None:
        p = _ode_state_probs(rseq.rates, ts)
    p[ts == 0.0] = np.eye(rseq.N)[0]
    return np.clip(p, 0.0, 1.0)


def state_probs(rseq: RateSequence, t: float) -> StateDistribution:
    """State distribution at a single time (closed form when trustworthy)."""
    p = state_probs_grid(rseq, [t])[0]
    return StateDistribution(t=float(t), probs=p)


def mean_quit_fraction(rseq: RateSequence, t: float) -> float:
    """E[X(t)], the expected fraction of players that have quit by t."""
    p = state_probs(rseq, t).probs
    i = np.arange(rseq.N)
    return float(np.dot(i / rseq.N, p))


def var_quit_fraction(rseq: RateSequence, t: float) -> float:
    """Var(X(t)) of the quit fraction."""
    p = state_probs(rseq, t).probs
    x = np.arange(rseq.N) / rseq.N
    m = np.dot(x, p)
    return float(max(np.dot(x * x, p) - m * m, 0.0))


def mean_prize_parts(rseq: RateSequence, spec: PrizeSpec, t: float, epsilon: float):
    """Split E[V(X(t))] into its bulk and epsilon-tail partial sums.

    Bulk runs over i = 1..floor((1-eps)N), tail over i = ceil((1-eps)N)..N-1;
    when (1-eps)N is an integer the boundary index belongs to both parts.
    """
    if not 0 < epsilon < 1:
        raise DomainError("epsilon must lie in (0, 1)")
    N = rseq.N
    p = state_probs(rseq, t).probs
    v = spec.values
    lo = int(np.floor((1 - epsilon) * N))
    hi = int(np.ceil((1 - epsilon) * N))
    bulk = float(np.dot(v[:lo], p[1:lo + 1])) if lo >= 1 else 0.0
    idx = np.arange(hi, N)
    tail = float(np.dot(v[idx - 1], p[idx])) if len(idx) else 0.0
    return bulk, tail


def expected_duration(spec: PrizeSpec) -> float:
    """Expected total game length T_N = sum (N-k)/(N-k+1) (V_{k+1} - V_k)."""
    N = spec.N
    k = np.arange(1, N)
    return float(np.sum((N - k) / (N - k + 1) * spec.diffs))


def _closed_transition_matrix(rates: np.ndarray, t: float) -> np.ndarray:
    """Eigenvector form P(t) = V.A(t); valid for pairwise-distinct rates."""
    N = len(rates)
    log_lam = np.log(rates[:-1])
    cum = np.concatenate([[0.0], np.cumsum(log_lam)])  # cum[j] = sum log lam_0..lam_{j-1}
    V = np.eye(N)
    A = np.diag(np.exp(-rates * t))
    for i in range(N):
        for j in range(i + 1, N):
            log_num = cum[j] - cum[i]
            dv = rates[i:j] - rates[j]
            V[i, j] = np.prod(np.sign(dv)) * np.exp(log_num - np.sum(np.log(np.abs(dv))))
            da = rates[i] - rates[i + 1:j + 1]
            A[i, j] = ((-1) ** (i + j) * np.prod(np.sign(da))
                       * np.exp(log_num - np.sum(np.log(np.abs(da))) - rates[i] * t))
    return V @ A


def _ode_transition_matrix(rates: np.ndarray, t: float) -> np.ndarray:
    N = len(rates)
    if t == 0.0:
        return np.eye(N)

    def rhs(_, y):
        P = y.reshape(N, N)
        out = -rates[:, None] * P
        out[:-1] += rates[:-1, None] * P[1:]
        return out.ravel()

    sol = solve_ivp(rhs, (0.0, t), np.eye(N).ravel(), method="DOP853",
                    rtol=_ODE_RTOL, atol=_ODE_ATOL)
    return sol.y[:, -1].reshape(N, N)


def transition_matrix(rseq: RateSequence, t: float) -> TransitionMatrix:
    """P(t) for the quit-count chain; upper triangular and row stochastic."""
    if t < 0:
        raise DomainError("transition matrix needs t >= 0")
    if t == 0.0:
        return TransitionMatrix(t=0.0, entries=np.eye(rseq.N))
    closed_ok = rseq.pairwise_distinct and rseq.N <= CLOSED_FORM_MAX_N
    if closed_ok:
        with np.errstate(over="ignore"):
            P = _closed_transition_matrix(rseq.rates, float(t))
        row_err = np.max(np.abs(P.sum(axis=1) - 1.0))
        if P.min() >= -_NEG_CLAMP and row_err <= _PROB_SUM_TOL:
            return TransitionMatrix(t=float(t), entries=np.clip(P, 0.0, 1.0))
    P = _ode_transition_matrix(rseq.rates, float(t))
    return TransitionMatrix(t=float(t), entries=np.clip(P, 0.0, 1.0))
