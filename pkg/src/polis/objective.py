"""Surrogate objective, its gradient estimates and the RMSprop ascent step.

The surrogate is ``J_bar - lam * sqrt(C_gamma(alpha)^2 + C_omega * B)``
where ``J_bar`` is the combined return estimate and ``B`` the rescaled
divergence bound between the future and past hyper-policy mixtures.
Its gradient has three parts:

* ``future``: derivative of the importance-weighted future return, a
  pathwise term (samples held fixed) plus a score term for the
  distribution that generated each past sample;
* ``past``: score-function gradient of the past return, estimated by
  replaying the last ``alpha`` steps against the recorded exogenous
  trace;
* ``penalty``: exact derivative of the variance penalty.
"""
import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .divergence_bounds import BoundEvaluator, MixtureSpec, mixture_grad, scaled_sq_dist
from .errors import DomainError
from .estimation import (as_window, c_gamma, future_return, mis_terms,
                         past_return, past_return_weights)
from .hyper_policy import LOG_D_CAP

log = logging.getLogger(__name__)

GRAD_CLIP = 1e6


@dataclass
class Gradient:
    """Gradient in the rho layout, kept split by objective term."""

    future: np.ndarray
    past: np.ndarray
    penalty: np.ndarray

    @classmethod
    def zeros(cls, n):
        return cls(np.zeros(n), np.zeros(n), np.zeros(n))

    @property
    def total(self):
        return self.future + self.past + self.penalty

    def norms(self):
        return {k: float(np.linalg.norm(getattr(self, k)))
                for k in ("future", "past", "penalty")}


@dataclass(frozen=True)
class SurrogateConfig:
    lam: float = 0.0
    n_replays: int = 100
    bound: str = "psi_first"
    credit: str = "immediate"

    def __post_init__(self):
        if self.lam < 0:
            raise DomainError("lambda must be >= 0")
        if self.n_replays < 1:
            raise DomainError("n_replays must be >= 1")
        if self.credit not in ("immediate", "to_go"):
            raise DomainError(f"unknown credit rule {self.credit!r}")


def lambda_from_delta(delta, R_max):
    """Penalty weight equivalent to confidence level ``1 - delta``."""
    if not 0.0 < delta < 1.0:
        raise DomainError("delta must lie in (0, 1)")
    return math.sqrt((1.0 - delta) / delta * 2.0 * R_max ** 2)


# -- penalty -----------------------------------------------------------------

@dataclass
class PenaltyTerms:
    value: float
    B: float
    log_B: float
    saturated: bool
    grad: np.ndarray = field(repr=False)
    upstream: tuple = field(default=None, repr=False)


def _joint_times(T, cfg):
    # past window followed by the future horizon
    return T - cfg.alpha + 1 + np.arange(cfg.alpha + cfg.beta)


def penalty_terms(T, hp, cfg, scfg, evaluator=None, with_grad=True, backprop=True):
    """Penalty value, bound B and (optionally) the gradient of ``-penalty``.

    ``upstream`` holds the gradient with respect to the means at the
    joint past-then-future times and to log sigma; ``backprop=False``
    skips mapping it onto rho.
    """
    evaluator = evaluator or BoundEvaluator(scfg.bound)
    spec = MixtureSpec.from_hyper_policy(hp, T, cfg)
    raw = scaled_sq_dist(spec.future_means, spec.past_means, spec.sigma)
    saturated = raw > LOG_D_CAP
    log_u, log_g = evaluator(np.minimum(raw, LOG_D_CAP), spec.zeta, spec.mu)

    log_scale = 2.0 * math.log(spec.c_future) - math.log(spec.c_past)
    log_B = log_u + log_scale
    log_inner = np.logaddexp(2.0 * math.log(c_gamma(cfg.gamma, cfg.alpha)),
                             math.log(spec.c_past) + log_B)
    with np.errstate(over="ignore"):
        value = scfg.lam * float(np.exp(0.5 * log_inner))
        B = float(np.exp(log_B))
    grad, upstream = np.zeros(hp.n_rho), None
    if with_grad and scfg.lam > 0:
        log_coef = math.log(scfg.lam * spec.c_past / 2.0) - 0.5 * log_inner + log_scale
        d_logd = -np.exp(log_coef + log_g)
        if saturated.any():
            log.warning("saturated divergence in penalty gradient; clipping %d pairs",
                        int(saturated.sum()))
            d_logd[saturated] = np.clip(d_logd[saturated], -GRAD_CLIP, GRAD_CLIP)
        g_fut, g_past, g_ls = mixture_grad(spec, d_logd)
        upstream = (np.concatenate([g_past, g_fut]), g_ls)
        if backprop:
            grad = hp.backprop(_joint_times(T, cfg), *upstream)
    return PenaltyTerms(value, B, float(log_B), bool(saturated.any()), grad, upstream)


def surrogate(h, hp, cfg, scfg, evaluator=None):
    """Combined return estimate minus the variance penalty."""
    window = as_window(h, cfg)
    j_bar = future_return(window, hp, cfg) + past_return(window, cfg)
    if scfg.lam == 0:
        return j_bar
    pen = penalty_terms(window.T, hp, cfg, scfg, evaluator, with_grad=False)
    return j_bar - pen.value


def grad_penalty(h, hp, cfg, scfg, evaluator=None):
    window = as_window(h, cfg)
    g = Gradient.zeros(hp.n_rho)
    if scfg.lam > 0:
        g.penalty = penalty_terms(window.T, hp, cfg, scfg, evaluator).grad
    return g


# -- future term -------------------------------------------------------------

def _future_upstream(window, hp, cfg, terms):
    # (pathwise, score) gradients w.r.t. means at the joint times and log sigma
    inv_var = np.exp(-2.0 * hp.log_sigma)
    c = terms.w_past * window.rewards                        # (alpha,)
    ratio = terms.ratios @ terms.g_future                     # R_t
    th = window.thetas

    # d/d log nu(theta_t | s) over future s, d/d log nu(theta_t | k) over past k
    a_fut = c[:, None] * terms.ratios * terms.g_future[None, :]
    log_w = np.log(np.maximum(terms.w_past, np.finfo(float).tiny))
    pi = np.exp(terms.log_past + log_w[None, :] - terms.log_den[:, None])
    pi = np.where(terms.w_past[None, :] > 0, pi, 0.0)
    a_past = -(c * ratio)[:, None] * pi

    def pull(a, means):
        # sum_t a[t, j] * dlog nu(theta_t | mean_j), expanded into products
        col = a.sum(0)[:, None]
        a_th = a.T @ th
        g_mean = (a_th - col * means) * inv_var
        sq = a.T @ th ** 2 - 2.0 * means * a_th + col * means ** 2
        g_ls = sq.sum(0) * inv_var - a.sum()
        return g_mean, g_ls

    gm_f, gs_f = pull(a_fut, terms.future_means)
    gm_p, gs_p = pull(a_past, terms.past_means)
    pathwise = (np.concatenate([gm_p, gm_f]), gs_p + gs_f)

    a_score = c * ratio
    diff = th - terms.past_means
    gm_s = a_score[:, None] * diff * inv_var
    gs_s = np.sum(a_score[:, None] * diff ** 2, axis=0) * inv_var - a_score.sum()
    return pathwise, (_pad_future(gm_s, cfg.beta), gs_s)


def _pad_future(g_mean, beta):
    return np.concatenate([g_mean, np.zeros((beta, g_mean.shape[1]))])


def future_gradient_parts(h, hp, cfg, terms=None):
    """Pathwise and score parts of the future-return gradient.

    The pathwise part differentiates the estimate with the samples held
    fixed. The score part adds ``sum_t w_t r_t R_t grad log nu(theta_t|t)``
    where ``R_t`` is the discounted importance ratio of sample ``t``.
    """
    window = as_window(h, cfg)
    terms = terms or mis_terms(window, hp, cfg)
    (gm_p, gs_p), (gm_s, gs_s) = _future_upstream(window, hp, cfg, terms)
    g = hp.backprop(_joint_times(window.T, cfg), np.stack([gm_p, gm_s]),
                    np.stack([gs_p, gs_s]))
    return g[0], g[1]


def grad_future(h, hp, cfg, terms=None):
    pathwise, score = future_gradient_parts(h, hp, cfg, terms)
    g = Gradient.zeros(hp.n_rho)
    g.future = pathwise + score
    return g


# -- past term ---------------------------------------------------------------

def grad_past_replay(env, h, hp, cfg, n_replays=100, rng=None, credit="immediate"):
    """Replay gradient of the past return.

    Each replay redraws ``theta_t ~ nu(.|t)`` for every step in the window
    and re-simulates the controllable state against the recorded
    exogenous values. Per-step rewards are centered with a leave-one-out
    mean over replays. ``credit="immediate"`` scores each sample with its
    own step's reward; ``"to_go"`` with the weighted reward from that
    step onwards, which also credits effects on later states.
    """
    window = as_window(h, cfg)
    g = Gradient.zeros(hp.n_rho)
    g.past = hp.backprop(window.times, *_replay_upstream(env, window, hp, cfg, n_replays,
                                                          rng, credit))
    return g


def _replay_upstream(env, window, hp, cfg, n_replays, rng, credit):
    rng = rng if rng is not None else np.random.default_rng()
    t0 = int(window.times[0])
    means = hp.means(_joint_times(window.T, cfg))[:cfg.alpha]
    sigma = hp.sigma
    z = rng.standard_normal((n_replays,) + means.shape)
    thetas = means[None] + sigma * z
    rewards = env.rollout(thetas, window.xc[0], t0)
    if n_replays > 1:
        baseline = (rewards.sum(0, keepdims=True) - rewards) / (n_replays - 1)
    else:
        baseline = np.zeros_like(rewards)
    adv = past_return_weights(cfg)[None, :] * (rewards - baseline)
    if credit == "to_go":
        adv = np.cumsum(adv[:, ::-1], axis=1)[:, ::-1]
    g_mean = np.einsum("nt,ntd->td", adv, z) / (n_replays * sigma)
    g_ls = np.einsum("nt,ntd->d", adv, z ** 2 - 1.0) / n_replays
    return g_mean, g_ls


# -- optimizer -------------------------------------------------------------

@dataclass
class OptimizerState:
    acc: np.ndarray
    lr: float = 1e-3
    decay: float = 0.9
    eps: float = 1e-10
    rejected: int = 0

    @classmethod
    def fresh(cls, n, **kw):
        return cls(np.zeros(n), **kw)


def optimizer_step(state, rho, grad):
    """One RMSprop ascent step; non-finite gradients leave everything unchanged."""
    g = grad.total if isinstance(grad, Gradient) else np.asarray(grad, dtype=float)
    if g.shape != rho.shape or g.shape != state.acc.shape:
        raise DomainError(f"shape mismatch: rho {rho.shape}, grad {g.shape}")
    if not np.all(np.isfinite(g)):
        log.warning("non-finite gradient; step rejected")
        return rho, OptimizerState(state.acc, state.lr, state.decay, state.eps,
                                   state.rejected + 1)
    acc = state.decay * state.acc + (1.0 - state.decay) * g ** 2
    rho = rho + state.lr * g / np.sqrt(acc + state.eps)
    return rho, OptimizerState(acc, state.lr, state.decay, state.eps, state.rejected)


# -- training ----------------------------------------------------------------

def train(env, h, hp, cfg, scfg, epochs, rng, state=None, evaluator=None,
          use_future=True):
    """Run ``epochs`` ascent steps on the surrogate over a frozen window.

    Returns ``(hp, state, rows)`` where ``rows`` holds one diagnostics dict
    per epoch. ``use_future=False`` drops the importance-sampled term and
    the penalty, leaving the past return only.
    """
    window = as_window(h, cfg)
    state = state or OptimizerState.fresh(hp.n_rho)
    evaluator = evaluator or BoundEvaluator(scfg.bound)
    j_past = past_return(window, cfg)
    rows = []
    times = _joint_times(window.T, cfg)
    for epoch in range(epochs):
        gm, gs = _replay_upstream(env, window, hp, cfg, scfg.n_replays, rng, scfg.credit)
        parts = [(_pad_future(gm, cfg.beta), gs)]
        j_future, pen = math.nan, None
        if use_future:
            terms = mis_terms(window, hp, cfg)
            j_future = future_return(window, hp, cfg, terms=terms)
            parts.extend(_future_upstream(window, hp, cfg, terms))
            if scfg.lam > 0:
                pen = penalty_terms(window.T, hp, cfg, scfg, evaluator, backprop=False)
                parts.append(pen.upstream)
        # one stacked backprop for all terms
        rows_g = hp.backprop(times, np.stack([p[0] for p in parts]),
                             np.stack([p[1] for p in parts]))
        g = Gradient.zeros(hp.n_rho)
        g.past = rows_g[0]
        if use_future:
            g.future = rows_g[1] + rows_g[2]
        if pen is not None:
            g.penalty = rows_g[3]
        norms = g.norms()
        rho, state = optimizer_step(state, hp.rho, g)
        hp = hp.with_rho(rho)
        rows.append({"epoch": epoch, "J_past": j_past, "J_future": j_future,
                     "B": pen.B if pen else math.nan,
                     "penalty": pen.value if pen else 0.0,
                     "saturated": int(pen.saturated) if pen else 0,
                     "norm_future": norms["future"], "norm_past": norms["past"],
                     "norm_penalty": norms["penalty"]})
    return hp, state, rows
