"""Infinite-player limit: quit fraction q(t), waiting-time density, ESS test.

In the limit the fraction of quitters satisfies V(q(t)) = t, so the game
lasts exactly T = V(1) - V(0), and the remaining players' waiting times
stay exponential with the q-dependent scale (1-q) V'(q).  Whether q's
density is a limit ESS reduces to the sign of a quadratic perturbation
integral weighted by V''.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DomainError, InvalidCdf, SingularDerivative
from .prize import (PrizeSpec, eval_prize, invert_prize, prize_derivative,
                    prize_second_derivative)

_SINGULAR_TOL = 1e-12


@dataclass(frozen=True)
class MeanFieldState:
    """Limit state at time t: quit fraction q and quitting density qdot."""

    spec: PrizeSpec
    t: float
    q: float
    qdot: float


def limit_duration(spec: PrizeSpec) -> float:
    """Total duration of the limit game, V(1) - V(0)."""
    return spec.v_max - eval_prize(spec, 0.0)


def quit_fraction(spec: PrizeSpec, t: float) -> MeanFieldState:
    """Limit quit fraction q = V^{-1}(t) and its rate qdot = 1/V'(q)."""
    v1 = spec.v_max
    if not 0 <= t <= v1:
        raise DomainError(f"mean-field time outside [0, V(1)]: {t!r}")
    q = invert_prize(spec, t)
    dv = prize_derivative(spec, q)
    if not np.isfinite(dv) or dv < _SINGULAR_TOL:
        raise SingularDerivative(f"V'({q:.6g}) = {dv:.3g} is too small or singular")
    return MeanFieldState(spec=spec, t=float(t), q=float(q), qdot=float(1.0 / dv))


def quit_fraction_curve(spec: PrizeSpec, points: int = 1001):
    """(t, q, qdot) arrays on an open grid of [0, T] avoiding the endpoints."""
    v1 = spec.v_max
    t = np.linspace(0.0, v1, points + 2)[1:-1]
    states = [quit_fraction(spec, ti) for ti in t]
    return t, np.array([s.q for s in states]), np.array([s.qdot for s in states])


def remaining_density(spec: PrizeSpec, t: float, tau):
    """Mean-field density m(t, tau) of players still waiting at game time t.

    Its tau-integral is 1 - q(t): an exponential profile with scale
    (1 - q) V'(q), weighted by 1/V'(q).
    """
    state = quit_fraction(spec, t)
    if state.q >= 1.0:
        raise DomainError("remaining density needs t < V(1)")
    taus = np.asarray(tau, dtype=float)
    if np.any(taus < 0):
        raise DomainError("waiting time tau must be >= 0")
    dv = 1.0 / state.qdot
    scale = (1.0 - state.q) * dv
    out = state.qdot * np.exp(-taus / scale)
    return float(out) if taus.ndim == 0 else out


def warped_quit_cdf(spec: PrizeSpec, beta: float):
    """Test cdf phi(t) = q(t)**beta; a valid cdf on [0, T] for beta > 0."""
    if beta <= 0:
        raise DomainError("warp exponent must be positive")

    def phi(t):
        return invert_prize(spec, t) ** beta

    return phi


def ess_perturbation(spec: PrizeSpec, phi_cdf, points: int = 20001) -> float:
    """Leading-order payoff deficit of an invader playing cdf phi against q.

    Returns the integral of (phi - q)^2 qdot V''(q) over [0, T] on an open
    grid (endpoint values of V'' may be singular but stay integrable).
    Positive for every phi != q exactly when the limit strategy is an ESS.
    """
    v1 = spec.v_max
    t = np.linspace(0.0, v1, points)[1:-1]
    phi = np.asarray(phi_cdf(t), dtype=float)
    if phi.shape != t.shape:
        raise InvalidCdf("phi must map the time grid to an equal-length array")
    if np.any(np.diff(phi) < -1e-12):
        raise InvalidCdf("phi must be non-decreasing")
    if phi[0] < -1e-9 or np.any(phi > 1.0 + 1e-9):
        raise InvalidCdf("phi must take values in [0, 1]")
    q = invert_prize(spec, t)
    dv = prize_derivative(spec, q)
    if np.any(~np.isfinite(dv)) or np.any(dv < _SINGULAR_TOL):
        raise SingularDerivative("V' vanishes inside (0, 1)")
    qdot = 1.0 / dv
    d2 = prize_second_derivative(spec, q)
    integrand = (phi - q) ** 2 * qdot * d2
    return float(np.trapezoid(integrand, t))
