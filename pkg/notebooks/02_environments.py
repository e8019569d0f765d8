# %% [markdown]
# # Environments with a factored state
#
# Each environment splits its state into a part the agent controls and an
# exogenous part drawn ahead of time. Because the exogenous trace does not
# react to actions, any past window can be replayed with different
# parameters.

# %%
import tempfile
from pathlib import Path

import numpy as np

from polis import DamEnv, SinusoidalBandit, VasicekTradingEnv, make_env
from polis.environments import synthetic_rates, write_rates_csv

rng = np.random.default_rng(1)

# %% [markdown]
# ## Sinusoidal bandit
# The reward is minus the squared distance between the played parameter
# and a moving target.

# %%
bandit = SinusoidalBandit(100, seed=0, noise=0.0)
print("targets:", bandit.trace[:10].round(3))
print("reward of playing 0 at t=0:", bandit.step([0.0])[1])
print("expected reward of N(0.5, 0.2^2) at t=12:", bandit.expected_reward(0.5, 0.2, 12))

# %% [markdown]
# ## Trading on a Vasicek rate
# The policy maps the previous position and the rate to a new position in
# [-1, 1]; the reward is the profit of the position minus a proportional fee.

# %%
env = VasicekTradingEnv(300, seed=3)
thetas = 0.5 * rng.standard_normal((300, env.policy_dim))
positions, rewards = [], []
for th in thetas:
    positions.append(env.state()[0])
    rewards.append(env.step(th)[1])
print("policy dimension:", env.policy_dim, "return over 300 steps:", round(sum(rewards), 4))

# %% [markdown]
# Replaying the same parameters from a recorded controllable state
# reproduces the live rewards exactly.

# %%
replay = env.rollout(thetas[None, 100:200], xc0=positions[100], start=100)[0]
live = np.array(rewards[100:200])
print("max gap between replay and live rewards:", np.abs(replay - live).max())
other = env.rollout(thetas[None, 100:200] + 0.3, xc0=positions[100], start=100)[0]
print("return of a shifted parameter sequence on the same window:", round(other.sum(), 4))

# %% [markdown]
# ## Dam control
# Three synthetic yearly inflow profiles drive a reservoir. The action is
# the daily release; costs penalize flooding and releases above demand.

# %%
for profile in (1, 2, 3):
    dam = DamEnv(730, seed=0, profile=profile)
    print(f"profile {profile}: mean inflow {dam.trace.mean():6.2f}, "
          f"range {dam.trace.min():5.2f} .. {dam.trace.max():5.2f}")

dam = DamEnv(200, seed=0, profile=1)
levels = []
for _ in range(200):
    dam.step([0.0, 0.0])
    levels.append(dam.xc[0])
print("level after 200 days at a constant mid release:", round(levels[-1], 2))

# %% [markdown]
# ## Trading from a rates file
# Real rates are user supplied. A synthetic series with the same CSV layout
# exercises the pipeline.

# %%
with tempfile.TemporaryDirectory() as tmp:
    path = Path(tmp) / "rates.csv"
    dates, rates = synthetic_rates(400, seed=0)
    write_rates_csv(path, dates, rates)
    trading = make_env("trading", 300, 0, rates_csv=str(path))
    print("first rates:", trading.trace[:4].round(5))
