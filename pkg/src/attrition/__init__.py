"""Numerical laboratory for N-player war-of-attrition games.

Two classical models share one limit: the repeated (dynamic) game whose
quit count is a pure-birth Markov chain, and the one-shot (static) game
whose candidate ESS cdf solves an autonomous ODE.  The package computes
both at finite N, their common infinite-player limit, the ESS
certificates that separate convex from concave prize ladders, and seeded
Monte Carlo experiments that validate the closed forms.
"""

from .errors import (AttritionError, DegenerateRates, DomainError, InvalidCdf,
                     InvalidParameter, MismatchedAtZero, NonMonotonePrize,
                     NumericalInstability, SingularDerivative, StepTooLarge,
                     TailNotConverged)
from .prize import (PrizeSpec, classify_convexity, eval_prize, from_json,
                    from_json_dict, invert_prize, make_prize, prize_derivative,
                    prize_second_derivative, to_json, to_json_dict)
from .dynamic_model import (RateSequence, StateDistribution, TransitionMatrix,
                            ess_rates, expected_duration, hypoexp_density,
                            mean_prize_parts, mean_quit_fraction, state_probs,
                            state_probs_grid, transition_matrix,
                            var_quit_fraction)
from .static_model import (EssCurve, InvasionReport, RateFitResult,
                           certificate_functional, ess_certificate,
                           ess_limit_error, ess_ode_rhs, gamma_sum,
                           invasion_gap, invasion_gap_closed,
                           invasion_gap_quadrature, invasion_rate_fit,
                           payoff_pure_vs_ess, solve_ess_ode)
from .meanfield import (MeanFieldState, ess_perturbation, limit_duration,
                        quit_fraction, quit_fraction_curve, remaining_density,
                        warped_quit_cdf)
from .simulate import (ExceedanceResult, ExponentialStrategy,
                       HalfNormalStrategy, ShiftedFamily, SimRun,
                       StrategyDensity, first_order_stat_density,
                       indistinguishability_experiment, rank_payoffs,
                       sample_static_game, simulate_dynamic_game,
                       wilson_interval)

__version__ = "0.1.0"
