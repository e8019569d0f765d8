# %% [markdown]
# # Estimating future and past returns from one trajectory
#
# Every past step drew its parameter from a different time slice of the
# hyper-policy. Treating those slices as one mixture gives an importance
# weight for any future time slice (the balance heuristic). The past
# return is an exponentially weighted average of realized rewards.

# %%
import math

import numpy as np

from polis import (EstimatorConfig, GaussianHyperPolicy, History, SinusoidalBandit, Stationary,
                   bias_bound, bias_bound_tight, future_return, past_return)
from polis.estimation import mis_terms

rng = np.random.default_rng(2)


def record(hp, env, n):
    h = History(n, env.policy_dim, env.dim_c)
    for t in range(n):
        theta = hp.sample(t, rng)
        xc, xu = env.state()
        h.append(t, theta, env.step(theta)[1], xu, xc)
    return h


# %% [markdown]
# ## Unbiased under stationarity
# With a constant target and a constant hyper-policy, the future estimate
# averages to the analytic expected return.

# %%
alpha, beta = 20, 10
cfg = EstimatorConfig(alpha, beta)
hp = GaussianHyperPolicy(Stationary(1), [0.4], math.log(0.6))
estimates = [future_return(record(hp, SinusoidalBandit(alpha + 1, seed=s, amplitude=0.0), alpha),
                           hp, cfg) for s in range(300)]
truth = beta * (-(0.4 ** 2) - 0.6 ** 2)
se = np.std(estimates, ddof=1) / math.sqrt(len(estimates))
print(f"Monte Carlo mean {np.mean(estimates):.4f} +- {se:.4f}, analytic {truth:.4f}")

# %% [markdown]
# ## Importance ratios
# The ratio matrix has one row per past sample and one column per future
# step. The denominator sums the past slices without normalizing, so under
# a constant hyper-policy with `omega = 1` every ratio equals `1 / alpha`.

# %%
window = record(hp, SinusoidalBandit(alpha + 1, seed=0, amplitude=0.0), alpha).window(alpha)
ratios = mis_terms(window, hp, cfg).ratios
print("ratio range:", ratios.min(), ratios.max(), "1/alpha =", 1 / alpha)

# %% [markdown]
# ## Exponential weighting of the past
# Smaller `omega` discounts older rewards more strongly.

# %%
h = History(5, 1)
for t, r in enumerate([1.0, 1.0, 1.0, 3.0, 3.0]):
    h.append(t, [0.0], r, 0.0, [0.0])
for omega in (1.0, 0.8, 0.5, 0.2):
    print(f"omega {omega}: past return {past_return(h, EstimatorConfig(5, 1, omega=omega)):.4f}")

# %% [markdown]
# ## Bias bounds
# Under smoothness of the reward and of the hyper-policy in time, the bias
# of the combined objective is bounded. The tighter form also covers
# `omega = 1`.

# %%
print("omega = 1:", bias_bound_tight(1.0, 0.0, 1.0, EstimatorConfig(3, 2, 0.9, 1.0)))
for omega in (0.5, 0.9, 0.99):
    c = EstimatorConfig(50, 10, 0.95, omega)
    print(f"omega {omega}: loose {bias_bound(1.0, 0.1, 1.0, c):10.4f}  "
          f"tight {bias_bound_tight(1.0, 0.1, 1.0, c):10.4f}")
