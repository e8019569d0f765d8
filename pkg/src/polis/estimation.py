"""Multiple-importance-sampling estimates of future and past return.

Notation: the window holds the last ``alpha`` records with times
``T-alpha+1 .. T``; the future horizon is ``T+1 .. T+beta``. Past records
are down-weighted by ``omega**(T-t)`` and future steps discounted by
``gamma**(s-T-1)``.
"""
import csv
from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from .errors import ConfigurationError, DegenerateEstimateError, DomainError, HistoryRangeError
from .hyper_policy import LOG_2PI

# log of the smallest admissible mixture density in the MIS denominator
LOG_DENOMINATOR_FLOOR = -700.0


@dataclass(frozen=True)
class EstimatorConfig:
    alpha: int
    beta: int
    gamma: float = 1.0
    omega: float = 1.0

    def __post_init__(self):
        if self.alpha < 1 or self.beta < 1:
            raise ConfigurationError("alpha and beta must be >= 1")
        if not 0.0 <= self.gamma <= 1.0 or not 0.0 <= self.omega <= 1.0:
            raise ConfigurationError("gamma and omega must lie in [0, 1]")


def c_omega(omega, alpha):
    """Normalizer of the exponential weights: sum of omega**n, n < alpha."""
    if omega < 1.0:
        return (1.0 - omega ** alpha) / (1.0 - omega)
    return float(alpha)


def c_gamma(gamma, xi):
    if gamma < 1.0:
        return (1.0 - gamma ** xi) / (1.0 - gamma)
    return float(xi)


def past_weights(cfg):
    """omega**(T-t) for t = T-alpha+1 .. T (oldest first)."""
    return cfg.omega ** np.arange(cfg.alpha - 1, -1, -1, dtype=float)


def future_weights(cfg):
    """gamma**(s-T-1) for s = T+1 .. T+beta."""
    return cfg.gamma ** np.arange(cfg.beta, dtype=float)


def past_return_weights(cfg):
    """omega**(T-t) * gamma**(t-T+alpha-1) / C_omega, oldest first."""
    back = cfg.gamma ** np.arange(cfg.alpha, dtype=float)
    return past_weights(cfg) * back / c_omega(cfg.omega, cfg.alpha)


@dataclass(frozen=True)
class Window:
    """Immutable snapshot of the last ``alpha`` history records."""

    times: np.ndarray
    thetas: np.ndarray
    rewards: np.ndarray
    xu: np.ndarray
    xc: np.ndarray

    @property
    def T(self):
        return int(self.times[-1])

    @property
    def alpha(self):
        return len(self.times)

    def future_times(self, beta):
        return self.T + 1 + np.arange(beta)


class History:
    """Ring buffer of ``(t, theta, r, xu, xc)`` records.

    Times must be consecutive integers. A single writer appends; readers
    take immutable :class:`Window` snapshots.
    """

    def __init__(self, capacity, policy_dim, dim_c=1):
        if capacity < 1:
            raise ConfigurationError("capacity must be >= 1")
        self.capacity = int(capacity)
        self.policy_dim = int(policy_dim)
        self.dim_c = int(dim_c)
        self._t = np.zeros(capacity, dtype=np.int64)
        self._theta = np.zeros((capacity, policy_dim))
        self._r = np.zeros(capacity)
        self._xu = np.zeros(capacity)
        self._xc = np.zeros((capacity, dim_c))
        self._n = 0

    def __len__(self):
        return min(self._n, self.capacity)

    @property
    def last_t(self):
        if self._n == 0:
            return None
        return int(self._t[(self._n - 1) % self.capacity])

    def append(self, t, theta, r, xu, xc):
        last = self.last_t
        if last is not None and t != last + 1:
            raise ConfigurationError(f"history times must be consecutive: {last} then {t}")
        i = self._n % self.capacity
        self._t[i] = t
        self._theta[i] = theta
        self._r[i] = r
        self._xu[i] = xu
        self._xc[i] = xc
        self._n += 1

    def window(self, alpha, now=None):
        """Snapshot of the last ``alpha`` records.

        ``now`` is the caller's clock; records stamped after it are a
        look-ahead and raise.
        """
        if alpha > len(self):
            raise HistoryRangeError(f"history holds {len(self)} records, window needs {alpha}")
        idx = (self._n - alpha + np.arange(alpha)) % self.capacity
        snap = Window(self._t[idx].copy(), self._theta[idx].copy(), self._r[idx].copy(),
                      self._xu[idx].copy(), self._xc[idx].copy())
        if now is not None and snap.T > now:
            raise HistoryRangeError(f"record at t={snap.T} is in the future of t={now}")
        for arr in (snap.times, snap.thetas, snap.rewards, snap.xu, snap.xc):
            arr.flags.writeable = False
        return snap

    def to_csv(self, path):
        w = self.window(len(self))
        with open(path, "w", newline="") as fh:
            out = csv.writer(fh)
            out.writerow(["t"] + [f"theta_{i}" for i in range(self.policy_dim)]
                         + ["r", "xu"] + [f"xc_{i}" for i in range(self.dim_c)])
            for k in range(w.alpha):
                out.writerow([int(w.times[k])] + [repr(float(v)) for v in w.thetas[k]]
                             + [repr(float(w.rewards[k])), repr(float(w.xu[k]))]
                             + [repr(float(v)) for v in w.xc[k]])

    @classmethod
    def from_csv(cls, path, capacity=None):
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
        header, rows = rows[0], rows[1:]
        policy_dim = sum(h.startswith("theta_") for h in header)
        dim_c = sum(h.startswith("xc_") for h in header)
        h = cls(capacity or max(len(rows), 1), policy_dim, dim_c)
        for row in rows:
            vals = [float(v) for v in row[1:]]
            h.append(int(row[0]), vals[:policy_dim], vals[policy_dim],
                     vals[policy_dim + 1], vals[policy_dim + 2:])
        return h


def as_window(h, cfg):
    if isinstance(h, Window):
        if h.alpha != cfg.alpha:
            raise ConfigurationError(f"window has {h.alpha} records, config alpha={cfg.alpha}")
        return h
    return h.window(cfg.alpha)


@dataclass
class MISTerms:
    """Log-densities and importance ratios shared by values and gradients."""

    past_means: np.ndarray      # (alpha, d)
    future_means: np.ndarray    # (beta, d)
    log_past: np.ndarray        # (alpha, alpha): log nu(theta_t | k)
    log_future: np.ndarray      # (alpha, beta): log nu(theta_t | s)
    log_den: np.ndarray         # (alpha,): log sum_k omega^(T-k) nu(theta_t | k)
    ratios: np.ndarray          # (alpha, beta): nu(theta_t|s) / denominator_t
    w_past: np.ndarray
    g_future: np.ndarray


def pairwise_log_density(thetas, means, log_sigma):
    """``out[t, j] = log N(thetas[t]; means[j], diag(exp(2 log_sigma)))``."""
    inv = np.exp(-log_sigma)
    x, m = thetas * inv, means * inv
    sq = (x ** 2).sum(1)[:, None] - 2.0 * x @ m.T + (m ** 2).sum(1)[None, :]
    return (-0.5 * np.maximum(sq, 0.0) - np.sum(log_sigma)
            - 0.5 * len(log_sigma) * LOG_2PI)


def mis_terms(window, hp, cfg):
    past_t = window.times
    fut_t = window.future_times(cfg.beta)
    means = hp.means(np.concatenate([past_t, fut_t]))
    pm, fm = means[:cfg.alpha], means[cfg.alpha:]
    log_past = pairwise_log_density(window.thetas, pm, hp.log_sigma)
    log_future = pairwise_log_density(window.thetas, fm, hp.log_sigma)
    w = past_weights(cfg)
    with np.errstate(divide="ignore"):
        log_w = np.log(w)
    log_den = logsumexp(log_past + log_w[None, :], axis=1)
    bad = np.flatnonzero(log_den < LOG_DENOMINATOR_FLOOR)
    if bad.size:
        raise DegenerateEstimateError(past_t[bad[0]], log_den[bad[0]])
    ratios = np.exp(log_future - log_den[:, None])
    return MISTerms(pm, fm, log_past, log_future, log_den, ratios, w, future_weights(cfg))


def step_ahead_reward(h, hp, cfg, s, terms=None):
    """Importance-weighted estimate of the expected reward at future time ``s``."""
    window = as_window(h, cfg)
    i = int(s) - window.T - 1
    if not 0 <= i < cfg.beta:
        raise DomainError(f"s={s} outside [{window.T + 1}, {window.T + cfg.beta}]")
    terms = terms or mis_terms(window, hp, cfg)
    return float(np.sum(terms.w_past * terms.ratios[:, i] * window.rewards))


def future_return(h, hp, cfg, form="single_pass", terms=None):
    """Estimate of the discounted return over the next ``beta`` steps.

    ``form="per_step"`` sums the per-step estimates explicitly; the
    default folds the discounted future densities into one ratio per
    sample. Both are algebraically equal.
    """
    window = as_window(h, cfg)
    terms = terms or mis_terms(window, hp, cfg)
    if form == "per_step":
        r_hat = (terms.w_past * window.rewards) @ terms.ratios
        return float(np.sum(terms.g_future * r_hat))
    if form == "single_pass":
        ratio = terms.ratios @ terms.g_future
        return float(np.sum(terms.w_past * ratio * window.rewards))
    raise ValueError(f"unknown form {form!r}")


def past_return(h, cfg):
    """Weighted average of the last ``alpha`` realized rewards."""
    window = as_window(h, cfg)
    return float(np.sum(past_return_weights(cfg) * window.rewards))


def combined_objective(h, hp, cfg):
    window = as_window(h, cfg)
    return future_return(window, hp, cfg) + past_return(window, cfg)


def bias_bound(L_M, L_nu, R_max, cfg):
    """Bias bound on the future-return estimator (requires omega < 1)."""
    _check_lipschitz(L_M, L_nu, R_max)
    if cfg.omega >= 1.0:
        raise DomainError("this bias bound needs omega < 1; use bias_bound_tight")
    if cfg.gamma >= 1.0:
        raise DomainError("bias bound undefined for gamma = 1")
    scale = (L_M + 2.0 * R_max * L_nu) * c_gamma(cfg.gamma, cfg.beta)
    return scale * (cfg.omega / (1.0 - cfg.omega) + 1.0 / (1.0 - cfg.gamma))


def bias_bound_tight(L_M, L_nu, R_max, cfg):
    """Tighter bias bound, valid for omega in [0, 1] and gamma < 1."""
    _check_lipschitz(L_M, L_nu, R_max)
    if cfg.gamma >= 1.0:
        raise DomainError("bias bound undefined for gamma = 1")
    # mean age under the omega weights; the closed form
    # w (1 - a w^(a-1) + (a-1) w^a) / ((1-w)(1-w^a)) cancels badly near w = 1
    ages = np.arange(cfg.alpha, dtype=float)
    w = cfg.omega ** ages
    spread = float(np.sum(ages * w) / np.sum(w))
    scale = (L_M + 2.0 * R_max * L_nu) * c_gamma(cfg.gamma, cfg.beta)
    return scale * (spread + 1.0 / (1.0 - cfg.gamma))


def _check_lipschitz(*values):
    if any(v < 0 for v in values):
        raise DomainError("Lipschitz constants and reward bound must be nonnegative")
