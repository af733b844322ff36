"""Seeded Monte Carlo: play actual games and compare with the closed forms.

All experiments draw from counter-based Philox streams spawned from a
single master seed, so every run is bit-reproducible and the two arms of
a comparison experiment use provably independent (or deliberately shared)
streams.  Replicates inside one arm are realised as vectorised draws from
that arm's stream.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import erf, erfinv, ndtri

from .dynamic_model import ess_rates
from .errors import DomainError, InvalidParameter, MismatchedAtZero
from .prize import PrizeSpec
from .static_model import EssCurve

_Z99 = float(ndtri(0.995))


def _generator(seed_seq) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(seed_seq))


def wilson_interval(successes: int, trials: int, z: float = 1.96):
    """Wilson score interval for a binomial proportion."""
    if trials <= 0:
        raise InvalidParameter("trials must be positive")
    p = successes / trials
    denom = 1.0 + z * z / trials
    center = (p + z * z / (2 * trials)) / denom
    half = z * math.sqrt(p * (1 - p) / trials + z * z / (4 * trials * trials)) / denom
    return center - half, center + half


# ---------------------------------------------------------------------------
# waiting-time strategy families


class StrategyDensity:
    """A waiting-time density with positive mass at zero and analytic ppf."""

    kind = "base"

    def for_round(self, round_index: int) -> "StrategyDensity":
        return self

    def density(self, tau, round_index: int = 1):
        raise NotImplementedError

    def cdf(self, tau, round_index: int = 1):
        raise NotImplementedError

    def ppf(self, p, round_index: int = 1):
        raise NotImplementedError

    def density_at_zero(self, round_index: int = 1) -> float:
        return float(self.for_round(round_index).density(0.0))

    def sample_minimum(self, rng: np.random.Generator, count: int, size,
                       round_index: int = 1):
        """Minimum of `count` i.i.d. draws via one inverse-cdf sample."""
        if count < 1:
            raise InvalidParameter("count must be >= 1")
        u = rng.random(size)
        p = -np.expm1(np.log1p(-u) / count)
        return self.for_round(round_index).ppf(p)


class ExponentialStrategy(StrategyDensity):
    kind = "exponential"

    def __init__(self, rate: float):
        if rate <= 0:
            raise InvalidParameter("exponential rate must be positive")
        self.rate = float(rate)

    def density(self, tau, round_index: int = 1):
        return self.rate * np.exp(-self.rate * np.asarray(tau, dtype=float))

    def cdf(self, tau, round_index: int = 1):
        return -np.expm1(-self.rate * np.asarray(tau, dtype=float))

    def ppf(self, p, round_index: int = 1):
        return -np.log1p(-np.asarray(p, dtype=float)) / self.rate


class HalfNormalStrategy(StrategyDensity):
    kind = "half_normal"

    def __init__(self, scale: float):
        if scale <= 0:
            raise InvalidParameter("half-normal scale must be positive")
        self.scale = float(scale)

    @classmethod
    def matched_to_exponential(cls, rate: float) -> "HalfNormalStrategy":
        """Scale chosen so the density at zero equals the exponential's rate."""
        return cls(math.sqrt(2.0 / math.pi) / rate)

    def density(self, tau, round_index: int = 1):
        t = np.asarray(tau, dtype=float)
        return math.sqrt(2.0 / math.pi) / self.scale * np.exp(-t * t / (2 * self.scale ** 2))

    def cdf(self, tau, round_index: int = 1):
        return erf(np.asarray(tau, dtype=float) / (self.scale * math.sqrt(2.0)))

    def ppf(self, p, round_index: int = 1):
        return self.scale * math.sqrt(2.0) * erfinv(np.asarray(p, dtype=float))


class ShiftedFamily(StrategyDensity):
    """Round-dependent family: round i plays base_factory(i)."""

    kind = "shifted_family"

    def __init__(self, base_factory):
        self.base_factory = base_factory

    def for_round(self, round_index: int) -> StrategyDensity:
        return self.base_factory(round_index)

    def density(self, tau, round_index: int = 1):
        return self.for_round(round_index).density(tau)

    def cdf(self, tau, round_index: int = 1):
        return self.for_round(round_index).cdf(tau)

    def ppf(self, p, round_index: int = 1):
        return self.for_round(round_index).ppf(p)


def first_order_stat_density(strategy: StrategyDensity, count: int, tau,
                             round_index: int = 1):
    """Density of the minimum of `count` i.i.d. draws from the strategy."""
    if count < 1:
        raise InvalidParameter("count must be >= 1")
    taus = np.asarray(tau, dtype=float)
    if np.any(taus < 0):
        raise DomainError("waiting time must be >= 0")
    s = strategy.for_round(round_index)
    out = count * s.density(taus) * (1.0 - s.cdf(taus)) ** (count - 1)
    return float(out) if taus.ndim == 0 else out


# ---------------------------------------------------------------------------
# experiment records


@dataclass(frozen=True)
class SimRun:
    """One seeded Monte Carlo experiment with its summary statistics."""

    seed: int
    replicates: int
    N: int
    outputs: dict


@dataclass(frozen=True)
class ExceedanceResult:
    """Per-N exceedance probabilities of |S_a - S_b| >= delta."""

    n_values: tuple
    exceedance: np.ndarray
    ci_lo: np.ndarray
    ci_hi: np.ndarray
    var_sum_a: np.ndarray
    var_sum_b: np.ndarray
    seed: int
    replicates: int
    q: float
    delta: float
    coupled: bool


# ---------------------------------------------------------------------------
# dynamic-model game


def simulate_dynamic_game(spec: PrizeSpec, seed: int, replicates: int,
                          t_grid=None) -> SimRun:
    """Play the repeated game: exponential round lengths at the ESS rates.

    Returns empirical quit-fraction mean/variance and state frequencies on
    a time grid, plus the empirical game duration.  The ci column is the
    99% normal half-width of the mean estimate.
    """
    if replicates < 1:
        raise InvalidParameter("replicates must be >= 1")
    N = spec.N
    rates = ess_rates(spec).rates[:-1]
    if t_grid is None:
        t_grid = np.linspace(0.0, 1.25 * spec.v_max, 101)
    else:
        t_grid = np.asarray(t_grid, dtype=float)

    rng = _generator(np.random.SeedSequence(seed))
    holds = rng.exponential(1.0, size=(replicates, N - 1)) / rates
    jumps = np.cumsum(holds, axis=1)

    n_t = len(t_grid)
    emp_mean = np.empty(n_t)
    emp_var = np.empty(n_t)
    ci = np.empty(n_t)
    freq = np.empty((n_t, N))
    for j, t in enumerate(t_grid):
        counts = (jumps <= t).sum(axis=1)
        x = counts / N
        emp_mean[j] = x.mean()
        emp_var[j] = x.var(ddof=1) if replicates > 1 else 0.0
        ci[j] = _Z99 * math.sqrt(emp_var[j] / replicates)
        freq[j] = np.bincount(counts, minlength=N) / replicates

    durations = jumps[:, -1]
    dur_ci = _Z99 * durations.std(ddof=1) / math.sqrt(replicates) if replicates > 1 else 0.0
    outputs = {
        "t": t_grid,
        "emp_E_X": emp_mean,
        "emp_Var_X": emp_var,
        "ci": ci,
        "state_freq": freq,
        "mean_duration": float(durations.mean()),
        "duration_ci": float(dur_ci),
        "trajectory": jumps[0].copy(),
    }
    return SimRun(seed=int(seed), replicates=int(replicates), N=N, outputs=outputs)


# ---------------------------------------------------------------------------
# strategy-indistinguishability experiment


def indistinguishability_experiment(family_a: StrategyDensity, family_b: StrategyDensity,
                                    q: float, n_list, delta: float, seed: int,
                                    replicates: int, coupled: bool = False,
                                    z: float = 1.96) -> ExceedanceResult:
    """Empirical P{|S_a - S_b| >= delta} for partial game-duration sums.

    S = sum over rounds i <= floor(qN) of the minimum of N-i+1 draws from
    the round's density.  Families must have equal density at zero, which
    is what makes the sums indistinguishable for large N.
    """
    if not 0 < q <= 1:
        raise InvalidParameter("q must lie in (0, 1]")
    if delta <= 0 or replicates < 1:
        raise InvalidParameter("delta must be positive and replicates >= 1")
    n_list = [int(n) for n in n_list]
    if not n_list or min(n_list) < 2:
        raise InvalidParameter("n_list must contain integers >= 2")

    max_rounds = int(math.floor(q * max(n_list)))
    for i in range(1, max_rounds + 1):
        fa = family_a.density_at_zero(i)
        fb = family_b.density_at_zero(i)
        if abs(fa - fb) > 1e-9 * max(1.0, abs(fa)):
            raise MismatchedAtZero(f"densities differ at zero in round {i}: {fa} vs {fb}")

    master = np.random.SeedSequence(seed)
    children = master.spawn(2 * len(n_list))
    exceed = np.empty(len(n_list))
    lo = np.empty(len(n_list))
    hi = np.empty(len(n_list))
    vsa = np.empty(len(n_list))
    vsb = np.empty(len(n_list))
    for j, n in enumerate(n_list):
        rng_a = _generator(children[2 * j])
        rng_b = rng_a if coupled else _generator(children[2 * j + 1])
        rounds = int(math.floor(q * n))
        sums_a = np.zeros(replicates)
        sums_b = np.zeros(replicates)
        var_a = 0.0
        var_b = 0.0
        for i in range(1, rounds + 1):
            count = n - i + 1
            ta = family_a.sample_minimum(rng_a, count, replicates, round_index=i)
            tb = family_b.sample_minimum(rng_b, count, replicates, round_index=i) \
                if not coupled else family_b.sample_minimum(rng_a, count, replicates,
                                                            round_index=i)
            sums_a += ta
            sums_b += tb
            if replicates > 1:
                var_a += ta.var(ddof=1)
                var_b += tb.var(ddof=1)
        k = int(np.sum(np.abs(sums_a - sums_b) >= delta))
        exceed[j] = k / replicates
        lo[j], hi[j] = wilson_interval(k, replicates, z=z)
        vsa[j] = var_a
        vsb[j] = var_b
    return ExceedanceResult(n_values=tuple(n_list), exceedance=exceed, ci_lo=lo, ci_hi=hi,
                            var_sum_a=vsa, var_sum_b=vsb, seed=int(seed),
                            replicates=int(replicates), q=float(q), delta=float(delta),
                            coupled=bool(coupled))


# ---------------------------------------------------------------------------
# static-model game


def rank_payoffs(times: np.ndarray, values: np.ndarray) -> np.ndarray:
    """Per-rank payoffs of one-shot games; rows are replicates.

    Rank k < N receives V_k and pays its own time; the last player
    receives V_N but pays the second-last quitter's time.
    """
    srt = np.sort(np.asarray(times, dtype=float), axis=1)
    pay = values[None, :] - srt
    pay[:, -1] = values[-1] - srt[:, -2]
    return pay


def sample_static_game(curve: EssCurve, seed: int, replicates: int) -> SimRun:
    """Play one-shot games with waiting times drawn from the solved cdf.

    Times are drawn by inverse-cdf interpolation on the curve grid; ties
    are broken by sort order (they are measure zero for a continuous cdf).
    The empirical mean payoff estimates the Nash-indifference constant.
    """
    if replicates < 1:
        raise InvalidParameter("replicates must be >= 1")
    spec = curve.spec
    N = spec.N
    rng = _generator(np.random.SeedSequence(seed))
    u = rng.random((replicates, N))
    times = np.interp(u, curve.cdf, curve.grid)
    pay = rank_payoffs(times, spec.values)
    rank_mean = pay.mean(axis=0)
    rank_ci = _Z99 * pay.std(axis=0, ddof=1) / math.sqrt(replicates) if replicates > 1 \
        else np.zeros(N)
    per_game = pay.mean(axis=1)
    mean_ci = _Z99 * per_game.std(ddof=1) / math.sqrt(replicates) if replicates > 1 else 0.0
    outputs = {
        "rank_mean_payoff": rank_mean,
        "rank_ci": rank_ci,
        "mean_payoff": float(pay.mean()),
        "mean_payoff_ci": float(mean_ci),
        "times_first_replicate": times[0].copy(),
    }
    return SimRun(seed=int(seed), replicates=int(replicates), N=N, outputs=outputs)
