# %% [markdown]
# # Time-conditioned hyper-policies
#
# A hyper-policy is a diagonal Gaussian over policy parameters whose mean
# depends on time. Three mean functions ship with the package: a constant,
# a sinusoid and a small causal temporal convolution network over encoded
# time stamps.

# %%
import numpy as np

from polis import GaussianHyperPolicy, Sinusoid, Stationary, TemporalConvNet

rng = np.random.default_rng(0)
times = np.arange(0, 200, 25)

# %% [markdown]
# ## Constant and sinusoidal means
# The sinusoid parameters per dimension are amplitude, frequency, phase
# and offset.

# %%
flat = GaussianHyperPolicy(Stationary(1), [0.3], log_sigma=-1.0)
wave = GaussianHyperPolicy(Sinusoid(1), [1.0, 2 * np.pi / 50, 0.0, 0.5], log_sigma=-1.0)
grid = np.arange(0, 50, 6)
print("constant:", flat.means(grid)[:, 0].round(3))
print("sinusoid:", wave.means(grid)[:, 0].round(3))

# %% [markdown]
# ## Temporal convolution mean
# The network sees the last `b + 1` encoded time stamps; times before 0
# are clamped, so the first few outputs share their inputs.

# %%
tcn = TemporalConvNet(2)
hp = GaussianHyperPolicy.initialize(tcn, rng, log_sigma=-1.0)
print("receptive field:", tcn.receptive_field, "parameters:", hp.n_rho)
print(hp.means(times).round(3))

# %% [markdown]
# ## Sampling and densities

# %%
draws = hp.sample(100, rng, size=5000)
print("empirical mean", draws.mean(0).round(3), "model mean", hp.mean(100).round(3))
print("empirical std ", draws.std(0).round(3), "model std ", hp.sigma.round(3))
print("log density of the mean:", round(float(hp.log_density(hp.mean(100), 100)), 4))

# %% [markdown]
# ## Reverse-mode gradients
# `backprop` maps an upstream gradient on the means to a gradient on the
# flat parameter vector. A central difference on a few coordinates agrees.

# %%
g_mean = rng.standard_normal((len(times), 2))
grad = hp.backprop(times, g_mean)


def objective(rho):
    return float(np.sum(hp.with_rho(rho).means(times) * g_mean))


for i in rng.choice(hp.n_rho - 2, 4, replace=False):
    e = np.zeros(hp.n_rho)
    e[i] = 1e-6
    fd = (objective(hp.rho + e) - objective(hp.rho - e)) / 2e-6
    print(f"coordinate {i:3d}: backprop {grad[i]: .6f}  finite difference {fd: .6f}")

# %% [markdown]
# ## Serialization

# %%
restored = GaussianHyperPolicy.from_json(hp.to_json())
print("round trip exact:", np.array_equal(restored.means(times), hp.means(times)))
