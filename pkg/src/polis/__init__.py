"""Lifelong policy optimization with a time-conditioned Gaussian hyper-policy."""
from .divergence_bounds import (METHODS, BoundEvaluator, MixtureSpec, VariationalParams,
                                bound_direct_opt, bound_two_steps_phi_first,
                                bound_two_steps_psi_first, bound_uniform_phi, bound_uniform_psi,
                                bound_variational, cantelli_lower_bound,
                                mixture_renyi_quadrature, optimal_phi_given_psi,
                                optimal_psi_given_phi, pairwise_d2, variance_bound)
from .environments import (DamEnv, SinusoidalBandit, TradingEnv, VasicekTradingEnv,
                           bandit_reward, dam_step, make_env, read_rates_csv, vasicek_step)
from .errors import (ConfigurationError, ConstraintError, DegenerateEstimateError, DomainError,
                     HistoryRangeError)
from .estimation import (EstimatorConfig, History, Window, bias_bound, bias_bound_tight,
                         combined_objective, future_return, past_return, step_ahead_reward)
from .harness import (BoundComparisonConfig, RunConfig, RunRecord, run_baseline_stationary,
                      run_bound_comparison, run_lifelong)
from .hyper_policy import (GaussianHyperPolicy, PositionalEncoding, Sinusoid, Stationary,
                           TemporalConvNet)
from .objective import (Gradient, OptimizerState, SurrogateConfig, grad_future,
                        grad_past_replay, grad_penalty, optimizer_step, surrogate, train)
