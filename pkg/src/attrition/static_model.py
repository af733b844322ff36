"""Static-model ESS candidate: the autonomous cdf ODE and its certificates.

The one-shot N-player game has a unique candidate ESS cdf G_N solving

    dG/dt = (1 - G^{N-1}) / [(N-1) sum_r c_r B(N-2,r) G^r (1-G)^{N-2-r}],
    G(0) = 0,

with c_r = V_{r+2} - V_{r+1}.  This module solves that ODE, checks the
Nash-indifference property, evaluates the second-order ESS certificate,
and computes the immediate-quit invasion gap by two independent routes
(direct quadrature of the payoff integral, and the closed form obtained
by collapsing the double binomial sum through a Gamma-function identity).
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.integrate import cumulative_trapezoid, simpson
from scipy.special import gammaln, gammasgn
from scipy.stats import binom as _binom

from .errors import DomainError, InvalidParameter, StepTooLarge, TailNotConverged
from .prize import PrizeSpec, invert_prize

_DEFAULT_STEP_COUNT = 10_000
_TAIL_LIMIT = 1e-8


@dataclass(frozen=True)
class EssCurve:
    """Solved candidate-ESS cdf on a uniform grid, with its density."""

    spec: PrizeSpec
    grid: np.ndarray
    cdf: np.ndarray
    density: np.ndarray
    step: float
    tail_tol: float

    @property
    def t_max(self) -> float:
        return float(self.grid[-1])


@dataclass(frozen=True)
class InvasionReport:
    """Payoff gap between the mixed candidate and quitting immediately."""

    N: int
    delta: float
    a_part: float
    c_part: float
    payoff_mixed: float
    payoff_quit_now: float
    method: str
    tail_estimate: float


@dataclass(frozen=True)
class RateFitResult:
    """Least-squares decay exponents of the invasion-gap parts over N."""

    n_values: tuple
    a_values: np.ndarray
    c_values: np.ndarray
    slope_a: float
    slope_c: float


class _OdeRhs:
    """Right-hand side of the cdf ODE with precomputed log-space weights."""

    def __init__(self, spec: PrizeSpec):
        c = spec.diffs
        n = spec.N - 2
        r = np.arange(n + 1)
        self.n_minus_1 = spec.N - 1
        self.r = r.astype(float)
        self.n_minus_r = (n - r).astype(float)
        self.log_w = np.log(c) + gammaln(n + 1) - gammaln(r + 1) - gammaln(n - r + 1)
        self.c = c
        self.at_zero = 1.0 / (self.n_minus_1 * c[0])

    def __call__(self, g: float) -> float:
        if g <= 0.0:
            return self.at_zero
        if g >= 1.0:
            return 0.0
        lg = math.log(g)
        l1 = math.log1p(-g)
        den = self.n_minus_1 * np.exp(self.log_w + self.r * lg + self.n_minus_r * l1).sum()
        return -math.expm1(self.n_minus_1 * lg) / den

    def on_array(self, g: np.ndarray) -> np.ndarray:
        g = np.clip(np.asarray(g, dtype=float), 0.0, 1.0)
        n = len(self.r) - 1
        pmf = _binom.pmf(np.arange(n + 1)[None, :], n, g[:, None])
        den = self.n_minus_1 * (pmf @ self.c)
        with np.errstate(divide="ignore"):
            num = -np.expm1(self.n_minus_1 * np.log(np.where(g > 0, g, 1.0)))
        num = np.where(g <= 0.0, 1.0, num)
        out = num / den
        out[g >= 1.0] = 0.0
        return out


def ess_ode_rhs(spec: PrizeSpec, value):
    """Density the candidate ESS must have when its cdf equals ``value``."""
    va = np.asarray(value, dtype=float)
    if np.any(va < 0) or np.any(va > 1):
        raise DomainError("cdf value must lie in [0, 1]")
    rhs = _OdeRhs(spec)
    if va.ndim == 0:
        return rhs(float(va))
    return rhs.on_array(va)


def solve_ess_ode(spec: PrizeSpec, step: float | None = None, tail_tol: float = 1e-12,
                  max_halvings: int = 6) -> EssCurve:
    """Integrate the cdf ODE by fixed-step RK4 until 1 - G < tail_tol.

    The default step is V(1)/10^4.  A decreasing or 1-overshooting step
    raises StepTooLarge; with max_halvings > 0 the step is halved and the
    solve restarted before giving up.
    """
    v1 = spec.v_max
    if step is None:
        step = v1 / _DEFAULT_STEP_COUNT
    if step <= 0:
        raise InvalidParameter("step must be positive")
    if not 0 < tail_tol < 1:
        raise InvalidParameter("tail_tol must lie in (0, 1)")

    rhs = _OdeRhs(spec)
    tail_time = spec.diffs[-1] * math.log(1.0 / tail_tol)
    last_err = None
    for _ in range(max_halvings + 1):
        try:
            grid, cdf = _rk4_until_tail(rhs, v1, step, tail_tol, tail_time)
        except StepTooLarge as exc:
            last_err = exc
            step /= 2.0
            continue
        density = rhs.on_array(cdf)
        return EssCurve(spec=spec, grid=grid, cdf=cdf, density=density,
                        step=step, tail_tol=tail_tol)
    raise StepTooLarge(f"no stable step found after {max_halvings} halvings") from last_err


def _rk4_until_tail(rhs: _OdeRhs, v1: float, h: float, tail_tol: float, tail_time: float):
    cap = int((4.0 * (v1 + 2.0 * tail_time) + 1.0) / h) + 10
    out = [0.0]
    g = 0.0
    m = 0
    while True:
        k1 = rhs(g)
        k2 = rhs(g + 0.5 * h * k1)
        k3 = rhs(g + 0.5 * h * k2)
        k4 = rhs(g + h * k3)
        g_next = g + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        if g_next > 1.0 + 1e-9:
            raise StepTooLarge(f"cdf overshot 1 by {g_next - 1.0:.3e} at step {m}")
        if g_next < g - 1e-15:
            raise StepTooLarge(f"cdf decreased at step {m}")
        g = min(g_next, 1.0)
        m += 1
        out.append(g)
        if m * h >= v1 and 1.0 - g < tail_tol:
            break
        if m > cap:
            raise TailNotConverged(f"cdf tail did not reach {tail_tol:g} within {cap} steps")
    grid = np.arange(len(out)) * h
    return grid, np.array(out)


def ess_limit_error(curve: EssCurve) -> float:
    """Sup-norm gap between the solved cdf and min(V^{-1}(t), 1) on the grid."""
    spec = curve.spec
    v1 = spec.v_max
    t = curve.grid
    lim = np.where(t >= v1, 1.0, invert_prize(spec, np.minimum(t, v1)))
    return float(np.max(np.abs(curve.cdf - lim)))


def ess_certificate(curve: EssCurve):
    """Second-order ESS certificate along the curve.

    Returns (values, minimum, argmin_t).  Nonnegative values certify the
    curve as an ESS; the certificate is normalised so its late-time limit
    is 1.  The derivative term uses the analytic expansion
    sum_r g G^r (1-G)^{N-3-r} [c_{r+1} C(N-2,r+1)(r+1) - c_r C(N-2,r)(N-2-r)],
    never a numerical derivative; the bracket equals
    (N-2) C(N-3,r) (c_{r+1} - c_r).
    """
    spec = curve.spec
    N = spec.N
    G = curve.cdf
    vals = G ** (N - 2) if N > 2 else np.ones_like(G)
    if N >= 3:
        r = np.arange(N - 2)
        pmf = _binom.pmf(r[None, :], N - 3, np.clip(G, 0.0, 1.0)[:, None])
        vals = vals + 0.5 * curve.density * (N - 2) * (pmf @ np.diff(spec.diffs))
    idx = int(np.argmin(vals))
    return vals, float(vals[idx]), float(curve.grid[idx])


def certificate_functional(curve: EssCurve, alpha) -> float:
    """Quadratic invasion functional: integral of certificate * alpha^2."""
    q_vals, _, _ = ess_certificate(curve)
    if callable(alpha):
        a = np.asarray(alpha(curve.grid), dtype=float)
    else:
        a = np.asarray(alpha, dtype=float)
    if a.shape != curve.grid.shape:
        raise InvalidParameter("alpha samples must match the curve grid")
    return float(np.trapezoid(q_vals * a * a, curve.grid))


def payoff_pure_vs_ess(curve: EssCurve, x):
    """Expected payoff of quitting at fixed time x against N-1 curve players.

    Constant in x exactly when the curve solves the cdf ODE; the last
    player pays the second-last quitter's time, which is where the
    integral term comes from.
    """
    spec = curve.spec
    N = spec.N
    xs = np.asarray(x, dtype=float)
    if np.any(xs < 0) or np.any(xs > curve.t_max):
        raise DomainError("pure strategy time outside [0, t_max]")
    t, G, g = curve.grid, curve.cdf, curve.density
    v_n = spec.values[-1]
    inner = (v_n - t) * (N - 1) * G ** (N - 2) * g
    cum = np.concatenate([[0.0], cumulative_trapezoid(inner, t)])
    gx = np.interp(xs, t, G)
    ix = np.interp(xs, t, cum)
    r = np.arange(N)
    pmf = _binom.pmf(r[None, :], N - 1, np.atleast_1d(gx)[:, None])
    ranked = pmf[:, :-1] @ spec.values[:-1] - np.atleast_1d(xs) * pmf[:, :-1].sum(axis=1)
    out = ranked + np.atleast_1d(ix)
    return float(out[0]) if xs.ndim == 0 else out


def _survival_integral(curve: EssCurve):
    """integral of (1-G)(1-G^{N-2}) dt, truncated tail estimated and added."""
    spec = curve.spec
    N = spec.N
    G = curve.cdf
    body = simpson((1.0 - G) * (1.0 - G ** (N - 2)), x=curve.grid)
    u = 1.0 - G[-1]
    tail = (N - 2) * u * u * spec.diffs[-1] / 2.0
    return float(body + tail), float(tail)


def invasion_gap_quadrature(curve: EssCurve) -> InvasionReport:
    """Immediate-quit invasion gap by direct quadrature of the payoff."""
    spec = curve.spec
    N = spec.N
    if N < 3:
        raise InvalidParameter("invasion gap needs N >= 3")
    if curve.tail_tol > 1e-10:
        raise InvalidParameter("quadrature route needs a curve solved with tail_tol <= 1e-10")
    t, G, g = curve.grid, curve.cdf, curve.density
    r = np.arange(N - 1)
    pmf = _binom.pmf(r[None, :], N - 2, np.clip(G, 0.0, 1.0)[:, None])
    prize_given_rank = pmf @ spec.values[1:]
    tail1 = spec.values[-1] * (1.0 - G[-1])
    term1 = float(simpson(g * prize_given_rank, x=t)) + tail1
    i2, tail2 = _survival_integral(curve)
    tail_est = tail1 + tail2
    if tail_est > _TAIL_LIMIT:
        raise TailNotConverged(f"tail estimate {tail_est:.3e} exceeds {_TAIL_LIMIT:g}")
    payoff_mixed = term1 - i2
    payoff_quit_now = float(spec.values[0] + spec.values[1]) / 2.0
    delta = payoff_mixed - payoff_quit_now
    return InvasionReport(N=N, delta=delta, a_part=payoff_mixed, c_part=-payoff_quit_now,
                          payoff_mixed=payoff_mixed, payoff_quit_now=payoff_quit_now,
                          method="quadrature", tail_estimate=tail_est)


def gamma_sum(q: int, p: float) -> float:
    """Alternating binomial sum sum_k C(q,k)(-1)^k/(k-p) = q! Gamma(-p)/Gamma(q+1-p)."""
    if not isinstance(q, (int, np.integer)) or q < 1:
        raise InvalidParameter("q must be a positive integer")
    if p >= 0 and float(p).is_integer():
        raise InvalidParameter("p must not be a nonnegative integer")
    sign = gammasgn(-p) * gammasgn(q + 1 - p)
    return float(sign * np.exp(gammaln(q + 1) + gammaln(-p) - gammaln(q + 1 - p)))


def invasion_gap_closed(curve: EssCurve) -> InvasionReport:
    """Invasion gap via the collapsed closed form.

    Only the survival integral remains numerical; the double binomial sum
    is reduced with the Gamma identity (see gamma_sum).
    """
    spec = curve.spec
    N = spec.N
    if N < 4:
        raise InvalidParameter("closed-form invasion gap needs N >= 4")
    c = spec.diffs
    coef = (N - 2) * (N - 3) / 2.0
    s = 0.0
    for r in range(N - 3):
        comb = math.exp(gammaln(N - 3) - gammaln(r + 1) - gammaln(N - 3 - r))
        q = N - 4 - r
        inner = gamma_sum(q, -(3 + r)) if q >= 1 else 1.0 / (3 + r)
        s += (c[r + 2] - c[r + 1]) * comb * coef * inner
    i2, tail2 = _survival_integral(curve)
    if tail2 > _TAIL_LIMIT:
        raise TailNotConverged(f"tail estimate {tail2:.3e} exceeds {_TAIL_LIMIT:g}")
    a_part = float(spec.values[-1] - (N - 2) / 2.0 * c[-1] + s - i2)
    c_part = -float(spec.values[0] + spec.values[1]) / 2.0
    delta = a_part + c_part
    return InvasionReport(N=N, delta=delta, a_part=a_part, c_part=c_part,
                          payoff_mixed=a_part, payoff_quit_now=-c_part,
                          method="closed_form", tail_estimate=tail2)


def invasion_gap(curve: EssCurve) -> InvasionReport:
    """Closed form when available (N >= 4), otherwise quadrature."""
    if curve.spec.N >= 4:
        return invasion_gap_closed(curve)
    return invasion_gap_quadrature(curve)


def invasion_rate_fit(alpha: float, n_list, step: float | None = None,
                      tail_tol: float = 1e-12) -> RateFitResult:
    """Log-log decay slopes of the invasion-gap parts for power prizes.

    Solves the cdf ODE for each N in n_list and fits straight lines to
    log|a_part| and log|c_part| against log N.
    """
    from .prize import make_prize

    if not 0 < alpha <= 1:
        raise InvalidParameter("rate fit is defined for alpha in (0, 1]")
    n_list = [int(n) for n in n_list]
    if len(n_list) < 4 or any(b <= a for a, b in zip(n_list, n_list[1:])):
        raise InvalidParameter("n_list must be increasing with at least 4 entries")
    if min(n_list) < 4:
        raise InvalidParameter("closed-form parts need N >= 4")
    a_vals, c_vals = [], []
    for n in n_list:
        spec = make_prize("power", n, alpha=alpha)
        rep = invasion_gap_closed(solve_ess_ode(spec, step=step, tail_tol=tail_tol))
        a_vals.append(rep.a_part)
        c_vals.append(rep.c_part)
    a_vals = np.array(a_vals)
    c_vals = np.array(c_vals)
    logs = np.log(np.asarray(n_list, dtype=float))
    slope_a = float(np.polyfit(logs, np.log(np.abs(a_vals)), 1)[0])
    slope_c = float(np.polyfit(logs, np.log(np.abs(c_vals)), 1)[0])
    return RateFitResult(n_values=tuple(n_list), a_values=a_vals, c_values=c_vals,
                         slope_a=slope_a, slope_c=slope_c)
