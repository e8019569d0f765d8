"""Non-stationary environments with a factored state.

Every environment splits its state into a controllable part ``xc`` that
reacts to actions and an exogenous part ``xu`` that does not. The
exogenous process is generated up front from a seed and revealed one
step at a time, which makes replaying past windows with different
policy parameters possible (and auditable against look-ahead).

Transitions are vectorized: ``xc`` has shape ``(n, dim_c)`` so the same
code drives the live interaction (``n = 1``) and batches of replays.
"""
import csv
import datetime as dt
import math

import numpy as np

from .errors import ConfigurationError, HistoryRangeError


def act(theta, obs, low, high):
    """Bounded affine policy.

    ``theta`` holds the weights followed by the bias; the squashed output
    ``low + (high - low) * (tanh(w . x + b) + 1) / 2`` always lies in the
    action box.
    """
    theta = np.asarray(theta, dtype=float)
    obs = np.asarray(obs, dtype=float)
    pre = np.sum(theta[..., :-1] * obs, axis=-1) + theta[..., -1]
    return low + (high - low) * (np.tanh(pre) + 1.0) / 2.0


def vasicek_step(p, u, kappa=0.9):
    return kappa * p + u


def vasicek_series(n, seed, kappa=0.9, p0=0.0):
    rng = np.random.default_rng(seed)
    u = rng.standard_normal(n - 1)
    p = np.empty(n)
    p[0] = p0
    for i in range(n - 1):
        p[i + 1] = vasicek_step(p[i], u[i], kappa)
    return p


def trading_reward(a, rate, rate_next, position, fee):
    """Profit of holding ``a`` over one step minus the rebalancing fee."""
    return a * (rate_next - rate) - fee * np.abs(a - position)


def flood_cost(level, flood_level=300.0):
    return np.maximum(level - flood_level, 0.0) ** 2


def demand_cost(release, demand=10.0, mode="as_paper"):
    if mode == "as_paper":
        return np.maximum(release - demand, 0.0) ** 2
    if mode == "deficit":
        return np.maximum(demand - release, 0.0) ** 2
    raise ConfigurationError(f"unknown demand_penalty {mode!r}")


def dam_step(level, inflow, release, weights=(0.3, 0.7), flood_level=300.0,
             demand=10.0, mode="as_paper"):
    """One day of reservoir operation.

    Returns ``(next_level, cost)``; the effective release is clipped to
    the water available.
    """
    if np.any(np.asarray(inflow) < 0):
        raise ConfigurationError("inflow must be nonnegative")
    release = np.clip(release, 0.0, level)
    nxt = level + inflow - release
    cost = (weights[0] * flood_cost(nxt, flood_level)
            + weights[1] * demand_cost(release, demand, mode))
    return nxt, cost


class Environment:
    """Factored-state environment over a pre-generated exogenous trace.

    Subclasses define ``dim_c``, the observation map and the vectorized
    ``transition``. ``trace[t]`` is the exogenous value at time ``t``.
    """

    name = None
    dim_c = 1
    action_low = -1.0
    action_high = 1.0

    def __init__(self, trace):
        self.trace = np.array(trace, dtype=float)
        self.trace.flags.writeable = False
        self.t = 0
        self.xc = self.initial_controllable()

    # -- contract -----------------------------------------------------
    def initial_controllable(self):
        return np.zeros(self.dim_c)

    def observe(self, xc, xu):
        raise NotImplementedError

    def transition(self, xc, xu, xu_next, action):
        """Vectorized step; returns ``(xc_next, reward)``."""
        raise NotImplementedError

    @property
    def policy_dim(self):
        """Length of theta: affine weights plus bias."""
        return self.obs_dim + 1

    @property
    def obs_dim(self):
        return self.observe(np.zeros((1, self.dim_c)), self.trace[:1]).shape[1]

    def action(self, theta, obs):
        return act(theta, obs, self.action_low, self.action_high)

    @property
    def reward_bound(self):
        return math.inf

    # -- interaction ----------------------------------------------------
    @property
    def horizon(self):
        return len(self.trace) - 1

    @property
    def revealed(self):
        """Last time index whose exogenous value has been observed."""
        return self.t

    def state(self):
        return self.xc.copy(), self.trace[self.t]

    def step(self, theta):
        """Play ``theta`` at the current time; returns ``(action, reward)``."""
        if self.t >= self.horizon:
            raise HistoryRangeError("exogenous trace exhausted")
        xc = self.xc[None, :]
        xu = self.trace[self.t:self.t + 1]
        obs = self.observe(xc, xu)
        a = self.action(np.asarray(theta)[None, :], obs)
        xc_next, r = self.transition(xc, xu, self.trace[self.t + 1:self.t + 2], a)
        self.xc = xc_next[0]
        self.t += 1
        return float(a[0]), float(r[0])

    def exogenous_trace(self, from_t, to_t):
        """Realized exogenous values for times ``from_t..to_t`` inclusive."""
        if from_t < 0:
            raise HistoryRangeError(f"window start {from_t} precedes the recording")
        if to_t > self.revealed:
            raise HistoryRangeError(
                f"time {to_t} not yet revealed (current time {self.revealed})")
        out = self.trace[from_t:to_t + 1]
        return out

    def rollout(self, thetas, xc0, start):
        """Replay parameter sequences over the frozen exogenous window.

        ``thetas`` has shape ``(n, length, policy_dim)`` and is played at
        times ``start .. start + length - 1``; returns rewards ``(n, length)``.
        """
        n, length, _ = thetas.shape
        xu = self.exogenous_trace(start, start + length)
        xc = np.broadcast_to(np.asarray(xc0, dtype=float), (n, self.dim_c)).copy()
        rewards = np.empty((n, length))
        for i in range(length):
            xu_t = np.full(n, xu[i])
            a = self.action(thetas[:, i, :], self.observe(xc, xu_t))
            xc, rewards[:, i] = self.transition(xc, xu_t, np.full(n, xu[i + 1]), a)
        return rewards

    def export_trace_csv(self, path, from_t=0, to_t=None):
        to_t = self.revealed if to_t is None else to_t
        values = self.exogenous_trace(from_t, to_t)
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t", "xu"])
            for i, v in enumerate(values):
                w.writerow([from_t + i, repr(float(v))])


class TradingEnv(Environment):
    """Single-asset trading with proportional fees.

    The controllable state is the current position in [-1, 1] (the
    previous action); the exogenous state is the rate. Reward is
    ``a_t (rate_{t+1} - rate_t) - fee |a_t - position_t|``.
    """

    name = "trading"
    dim_c = 1

    def __init__(self, rates, fee=1e-5):
        self.fee = float(fee)
        super().__init__(rates)

    def observe(self, xc, xu):
        return np.column_stack([xc[:, 0], xu])

    def transition(self, xc, xu, xu_next, action):
        r = trading_reward(action, xu, xu_next, xc[:, 0], self.fee)
        return action[:, None].copy(), r

    def rollout(self, thetas, xc0, start):
        # the rate terms do not depend on the position, so only the
        # position recursion stays in the loop; arithmetic order matches act()
        n, length, _ = thetas.shape
        rates = self.exogenous_trace(start, start + length)
        th = np.ascontiguousarray(np.moveaxis(thetas, 1, 0))      # (length, n, 3)
        rate_part = th[:, :, 1] * rates[:-1, None]
        pos = np.broadcast_to(np.asarray(xc0, dtype=float)[0], (n,)).copy()
        positions = np.empty((length + 1, n))
        positions[0] = pos
        lo, span = self.action_low, self.action_high - self.action_low
        for i in range(length):
            pre = (th[i, :, 0] * pos + rate_part[i]) + th[i, :, 2]
            pos = lo + span * (np.tanh(pre) + 1.0) / 2.0
            positions[i + 1] = pos
        r = trading_reward(positions[1:], rates[:-1, None], rates[1:, None],
                           positions[:-1], self.fee)
        return np.ascontiguousarray(r.T)

    @property
    def reward_bound(self):
        return float(np.max(np.abs(np.diff(self.trace)))) + 2.0 * self.fee


class VasicekTradingEnv(TradingEnv):
    """Trading on a simulated mean-reverting AR(1) rate."""

    name = "vasicek"

    def __init__(self, horizon, seed, fee=1e-5, kappa=0.9):
        self.seed = seed
        super().__init__(vasicek_series(horizon + 1, seed, kappa), fee)


def read_rates_csv(path):
    """Read a two-column ``date,close`` CSV in chronological order."""
    dates, rates = [], []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or len(header) != 2:
            raise ConfigurationError(f"{path}: expected a 2-column header row")
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 2:
                raise ConfigurationError(f"{path}:{lineno}: expected 2 columns")
            try:
                day = dt.date.fromisoformat(row[0].strip())
                rate = float(row[1])
            except ValueError as exc:
                raise ConfigurationError(f"{path}:{lineno}: {exc}") from None
            if dates and day <= dates[-1]:
                raise ConfigurationError(f"{path}:{lineno}: dates not strictly increasing")
            dates.append(day)
            rates.append(rate)
    if len(rates) < 2:
        raise ConfigurationError(f"{path}: need at least two rows")
    return dates, np.array(rates)


def synthetic_rates(n, seed, start=1.2, vol=0.005, start_date="2013-01-01"):
    """Rate series shaped like a daily FX close: log-normal random walk."""
    rng = np.random.default_rng(seed)
    rates = start * np.exp(np.concatenate([[0.0], np.cumsum(vol * rng.standard_normal(n - 1))]))
    d0 = dt.date.fromisoformat(start_date)
    dates = [d0 + dt.timedelta(days=i) for i in range(n)]
    return dates, rates


def write_rates_csv(path, dates, rates):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["date", "close"])
        for d, r in zip(dates, rates):
            w.writerow([d.isoformat(), repr(float(r))])


# Mean daily inflow: base + amp * sin(2 pi t / 365 + phase); cost weights
# (flood, demand) per profile.
INFLOW_PROFILES = {
    1: {"base": 10.0, "amp": 8.0, "phase": 0.0, "weights": (0.3, 0.7)},
    2: {"base": 8.0, "amp": 4.0, "phase": 2.0, "weights": (0.8, 0.2)},
    3: {"base": 11.0, "amp": 10.0, "phase": 4.0, "weights": (0.35, 0.65)},
}


def inflow_series(n, seed, profile=1, noise=0.2, period=365.0):
    p = INFLOW_PROFILES[profile]
    t = np.arange(n)
    mean = p["base"] + p["amp"] * np.sin(2 * np.pi * t / period + p["phase"])
    rng = np.random.default_rng(seed)
    return mean * np.exp(noise * rng.standard_normal(n) - noise ** 2 / 2)


class DamEnv(Environment):
    """Reservoir control against a seasonal, noisy inflow.

    The policy observes only the level, scaled by the flood level; the
    action is the daily release in ``[0, max_release]``. Reward is the
    negative weighted cost divided by ``cost_scale``.
    """

    name = "dam"
    dim_c = 1
    action_low = 0.0

    def __init__(self, horizon, seed, profile=1, flood_level=300.0, demand=10.0,
                 max_release=40.0, initial_level=200.0, demand_penalty="as_paper",
                 cost_scale=1e3, noise=0.2):
        if profile not in INFLOW_PROFILES:
            raise ConfigurationError(f"unknown inflow profile {profile}")
        self.seed = seed
        self.profile = profile
        self.weights = INFLOW_PROFILES[profile]["weights"]
        self.flood_level = float(flood_level)
        self.demand = float(demand)
        self.action_high = float(max_release)
        self.initial_level = float(initial_level)
        self.demand_penalty = demand_penalty
        demand_cost(0.0, mode=demand_penalty)
        self.cost_scale = float(cost_scale)
        super().__init__(inflow_series(horizon + 1, seed, profile, noise))

    def initial_controllable(self):
        return np.array([self.initial_level])

    def observe(self, xc, xu):
        return xc[:, :1] / self.flood_level

    def rollout(self, thetas, xc0, start):
        # level recursion in the loop, costs vectorized afterwards
        n, length, _ = thetas.shape
        inflow = self.exogenous_trace(start, start + length)
        th = np.ascontiguousarray(np.moveaxis(thetas, 1, 0))      # (length, n, 2)
        level = np.broadcast_to(np.asarray(xc0, dtype=float)[0], (n,)).copy()
        levels = np.empty((length, n))
        releases = np.empty((length, n))
        lo, span = self.action_low, self.action_high - self.action_low
        for i in range(length):
            pre = th[i, :, 0] * (level / self.flood_level) + th[i, :, 1]
            a = lo + span * (np.tanh(pre) + 1.0) / 2.0
            rel = np.clip(a, 0.0, level)
            level = level + inflow[i] - rel
            levels[i] = level
            releases[i] = rel
        cost = (self.weights[0] * flood_cost(levels, self.flood_level)
                + self.weights[1] * demand_cost(releases, self.demand, self.demand_penalty))
        return np.ascontiguousarray((-cost / self.cost_scale).T)

    def transition(self, xc, xu, xu_next, action):
        level, cost = dam_step(xc[:, 0], xu, action, self.weights, self.flood_level,
                               self.demand, self.demand_penalty)
        return level[:, None], -cost / self.cost_scale

    @property
    def reward_bound(self):
        top = self.initial_level + float(np.sum(self.trace))
        worst_release = max(self.action_high - self.demand, self.demand) ** 2
        return (self.weights[0] * max(top - self.flood_level, 0.0) ** 2
                + self.weights[1] * worst_release) / self.cost_scale


class SinusoidalBandit(Environment):
    """Contextual bandit whose target follows ``c sin(freq t)``.

    The policy parameter is played directly as the action and earns
    ``-(theta - context)^2`` plus Gaussian noise.
    """

    name = "bandit"
    dim_c = 1

    def __init__(self, horizon, seed, amplitude=1.0, freq=2 * np.pi / 50, noise=0.1):
        self.seed = seed
        self.amplitude = float(amplitude)
        self.freq = float(freq)
        self.noise = float(noise)
        # live rewards and replays draw noise from separate streams, so
        # replaying never shifts the noise of later live steps
        self.rng, self.replay_rng = (np.random.default_rng(s)
                                     for s in np.random.SeedSequence(seed).spawn(2))
        t = np.arange(horizon + 1)
        super().__init__(self.amplitude * np.sin(self.freq * t))

    @property
    def policy_dim(self):
        return 1

    def observe(self, xc, xu):
        return np.zeros((len(xc), 0))

    def action(self, theta, obs):
        return np.asarray(theta)[..., 0]

    def transition(self, xc, xu, xu_next, action):
        r = -(action - xu) ** 2
        if self.noise:
            r = r + self.noise * self.rng.standard_normal(r.shape)
        return xc, r

    def rollout(self, thetas, xc0, start):
        n, length, _ = thetas.shape
        ctx = self.exogenous_trace(start, start + length)[:-1]
        r = -(thetas[:, :, 0] - ctx[None, :]) ** 2
        if self.noise:
            r = r + self.noise * self.replay_rng.standard_normal(r.shape)
        return r

    def expected_reward(self, mu, sigma, t):
        """Mean reward when theta ~ N(mu, sigma^2) is played at time ``t``."""
        return -(mu - self.trace[t]) ** 2 - sigma ** 2


def bandit_reward(theta, t, amplitude=1.0, freq=2 * np.pi / 50, noise=0.0, rng=None):
    r = -(theta - amplitude * np.sin(freq * t)) ** 2
    if noise:
        r = r + noise * rng.standard_normal(np.shape(r))
    return r


def make_env(name, horizon, seed, **params):
    if name == "vasicek":
        return VasicekTradingEnv(horizon, seed, **params)
    if name == "dam":
        return DamEnv(horizon, seed, **params)
    if name == "bandit":
        return SinusoidalBandit(horizon, seed, **params)
    if name == "trading":
        path = params.pop("rates_csv", None)
        if path is None:
            raise ConfigurationError("trading environment needs rates_csv")
        _, rates = read_rates_csv(path)
        if len(rates) < horizon + 1:
            raise ConfigurationError(
                f"{path}: {len(rates)} rows, run needs {horizon + 1}")
        return TradingEnv(rates[:horizon + 1], **params)
    raise ConfigurationError(f"unknown environment {name!r}")
