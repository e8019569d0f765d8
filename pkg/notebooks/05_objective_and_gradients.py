# %% [markdown]
# # The training objective and its gradient
#
# Training maximizes the estimated future return plus the replayed past
# return, minus a penalty that grows with the estimated variance of the
# future estimate. The gradient has four parts: a pathwise part through
# the importance ratios, a score part, a replay part and a penalty part.
# RMSprop ascent applies their sum.

# %%
import math

import numpy as np

from polis import (EstimatorConfig, GaussianHyperPolicy, History, OptimizerState, Sinusoid,
                   SinusoidalBandit, SurrogateConfig, grad_future, grad_past_replay,
                   grad_penalty, optimizer_step, surrogate, train)

rng = np.random.default_rng(5)
alpha, beta = 60, 20
cfg = EstimatorConfig(alpha, beta)
env = SinusoidalBandit(200, seed=1, noise=0.05)

# %% [markdown]
# Collect a window under a broad hyper-policy with a small amplitude. The
# past return in the diagnostics is the realized one and stays fixed.

# %%
hp = GaussianHyperPolicy(Sinusoid(1), [0.1, 2 * math.pi / 50, 0.0, 0.0], log_sigma=0.0,
                         learn_sigma=True)
h = History(alpha, 1)
for t in range(alpha):
    theta = hp.sample(t, rng)
    xc, xu = env.state()
    h.append(t, theta, env.step(theta)[1], xu, xc)
window = h.window(alpha)

# %% [markdown]
# ## Gradient parts

# %%
scfg = SurrogateConfig(lam=0.5, n_replays=50)
print("surrogate value:", round(surrogate(window, hp, cfg, scfg), 4))
parts = {"future": grad_future(window, hp, cfg).future,
         "past": grad_past_replay(env, window, hp, cfg, 50, rng).past,
         "penalty": grad_penalty(window, hp, cfg, scfg).penalty}
for name, g in parts.items():
    print(f"{name:8s} amplitude {g[0]: .4f}  offset {g[3]: .4f}  log sigma {g[4]: .4f}")

# %% [markdown]
# ## Optimizer
# `train` runs full-gradient epochs on the fixed window. Each row holds one
# epoch's diagnostics.

# %%
state = OptimizerState.fresh(hp.n_rho)
trained, state, rows = train(env, window, hp, cfg, scfg, 300, rng, state)
for row in rows[::60]:
    print({k: round(v, 4) if isinstance(v, float) else v
           for k, v in row.items() if k in ("epoch", "J_past", "J_future", "penalty")})
print("weights before:", hp.weights.round(3), "sigma", hp.sigma.round(3))
print("weights after: ", trained.weights.round(3), "sigma", trained.sigma.round(3))

# %% [markdown]
# ## One manual step
# `optimizer_step` is the plain RMSprop update used by `train`.

# %%
state = OptimizerState.fresh(3)
rho = np.zeros(3)
for _ in range(3):
    rho, state = optimizer_step(state, rho, np.array([1.0, -2.0, 0.0]))
print("rho after three constant-gradient steps:", rho)
