"""Upper bounds on the exponentiated Renyi divergence between mixtures.

All bounds start from the variational inequality

    d_a(Psi || Phi)^(a-1) <= sum_ij phi_ij^a psi_ij^(1-a) d_a(P_i || Q_j)^(a-1)

for feasible matrices (``sum_i psi_ij = mu_j``, ``sum_j phi_ij = zeta_i``)
and differ in how the matrices are chosen. Every function here works on
the matrix ``logd[i, j] = log d_a(P_i || Q_j)`` and returns the bound on
the ``d_a`` scale. Computations run in log space; pairwise entries are
capped at ``LOG_D_CAP``.
"""
import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy import integrate
from scipy.special import logsumexp

from .errors import ConstraintError, DomainError
from .estimation import c_gamma, c_omega, future_weights, past_weights
from .hyper_policy import LOG_D_CAP

GRAD_CAP = 1e6
METHODS = ("psi_first", "phi_first", "uniform_psi", "uniform_phi",
           "direct_reset", "direct_no_reset")


@dataclass(frozen=True)
class MixtureSpec:
    """Two Gaussian mixtures with a shared diagonal covariance.

    ``future`` (weights ``zeta``) is the target mixture Psi and ``past``
    (weights ``mu``) the behavioral mixture Phi. ``c_future`` and
    ``c_past`` are the normalizers that turned raw weights into
    ``zeta`` and ``mu``; they only matter for :meth:`to_B`.
    """

    future_means: np.ndarray
    past_means: np.ndarray
    sigma: np.ndarray
    zeta: np.ndarray
    mu: np.ndarray
    c_future: float = 1.0
    c_past: float = 1.0

    def __post_init__(self):
        for name in ("zeta", "mu"):
            w = getattr(self, name)
            if np.any(w < 0) or abs(w.sum() - 1.0) > 1e-12:
                raise ConstraintError(f"{name} must be nonnegative and sum to 1")

    @classmethod
    def build(cls, future_means, past_means, sigma, zeta=None, mu=None):
        fm = np.atleast_2d(np.asarray(future_means, dtype=float).T).T
        pm = np.atleast_2d(np.asarray(past_means, dtype=float).T).T
        if fm.ndim == 1:
            fm = fm[:, None]
        sigma = np.broadcast_to(np.asarray(sigma, dtype=float), fm.shape[1:]).copy()
        zeta = np.full(len(fm), 1.0 / len(fm)) if zeta is None else np.asarray(zeta, float)
        mu = np.full(len(pm), 1.0 / len(pm)) if mu is None else np.asarray(mu, float)
        return cls(fm, pm, sigma, zeta, mu)

    @classmethod
    def from_hyper_policy(cls, hp, T, cfg):
        """Future mixture over ``T+1..T+beta``, past mixture over the window."""
        fut = T + 1 + np.arange(cfg.beta)
        past = T - cfg.alpha + 1 + np.arange(cfg.alpha)
        means = hp.means(np.concatenate([past, fut]))
        cf, cp = c_gamma(cfg.gamma, cfg.beta), c_omega(cfg.omega, cfg.alpha)
        return cls(means[cfg.alpha:], means[:cfg.alpha], hp.sigma,
                   future_weights(cfg) / cf, past_weights(cfg) / cp, cf, cp)

    @property
    def L(self):
        return len(self.zeta)

    @property
    def K(self):
        return len(self.mu)

    def to_B(self, d2_bound):
        """Rescale a d_2 bound to the penalty quantity B."""
        return self.c_future ** 2 / self.c_past * d2_bound


def scaled_sq_dist(a, b, sigma):
    """``sum_d (a_i - b_j)^2 / sigma^2`` for every pair of rows."""
    x, y = a / sigma, b / sigma
    sq = (x ** 2).sum(1)[:, None] - 2.0 * x @ y.T + (y ** 2).sum(1)[None, :]
    return np.maximum(sq, 0.0)


def log_pairwise(spec, order=2.0):
    """``log d_order(P_i || Q_j)`` for equal-covariance Gaussians, capped.

    Returns ``(logd, saturated)``.
    """
    logd = 0.5 * order * scaled_sq_dist(spec.future_means, spec.past_means, spec.sigma)
    saturated = bool(np.any(logd > LOG_D_CAP))
    return np.minimum(logd, LOG_D_CAP), saturated


def pairwise_d2(spec):
    return np.exp(log_pairwise(spec, 2.0)[0])


def _exp(x):
    with np.errstate(over="ignore"):
        return float(np.exp(x))


def _logs(w):
    with np.errstate(divide="ignore"):
        return np.log(w)


# -- closed-form bounds ----------------------------------------------------

def psi_first_from_logd(logd, zeta, mu, order=2.0):
    c = (order - 1.0) / order
    inner = logsumexp(_logs(mu)[None, :] - logd, axis=1)
    return _exp(logsumexp(_logs(zeta) - c * inner) / c)


def phi_first_from_logd(logd, zeta, mu, order=2.0):
    c = (order - 1.0) / order
    inner = logsumexp(_logs(zeta)[:, None] + c * logd, axis=0)
    return _exp(-logsumexp(_logs(mu) - inner / c))


def uniform_psi_from_logd(logd, zeta, mu, order=2.0):
    a = order
    inner = logsumexp(_logs(mu)[None, :] - logd, axis=1)
    log_pow = (a - 1.0) * math.log(len(zeta)) + logsumexp(a * _logs(zeta) + (1.0 - a) * inner)
    return _exp(log_pow / (a - 1.0))


def uniform_phi_from_logd(logd, zeta, mu, order=2.0):
    a, c = order, (order - 1.0) / order
    inner = logsumexp(_logs(zeta)[:, None] + c * logd, axis=0)
    log_pow = -a * math.log(len(mu)) + logsumexp((1.0 - a) * _logs(mu) + a * inner)
    return _exp(log_pow / (a - 1.0))


def bound_two_steps_psi_first(spec, order=2.0):
    """Harmonic mean over the past inside a power mean over the future.

    This is the bound used by the surrogate objective; ``spec.to_B`` of
    the result gives the penalty quantity B.
    """
    return psi_first_from_logd(log_pairwise(spec, order)[0], spec.zeta, spec.mu, order)


def bound_two_steps_phi_first(spec, order=2.0):
    return phi_first_from_logd(log_pairwise(spec, order)[0], spec.zeta, spec.mu, order)


def bound_uniform_psi(spec, order=2.0):
    return uniform_psi_from_logd(log_pairwise(spec, order)[0], spec.zeta, spec.mu, order)


def bound_uniform_phi(spec, order=2.0):
    return uniform_phi_from_logd(log_pairwise(spec, order)[0], spec.zeta, spec.mu, order)


# -- variational parameters ----------------------------------------------

@dataclass
class VariationalParams:
    psi: np.ndarray
    phi: np.ndarray

    @classmethod
    def uniform(cls, zeta, mu):
        L, K = len(zeta), len(mu)
        return cls(np.tile(np.asarray(mu) / L, (L, 1)),
                   np.tile(np.asarray(zeta)[:, None] / K, (1, K)))

    def check(self, zeta, mu, tol=1e-10):
        if np.any(self.psi < 0) or np.any(self.phi < 0):
            raise ConstraintError("variational parameters must be nonnegative")
        if np.max(np.abs(self.psi.sum(0) - mu)) > tol:
            raise ConstraintError("psi columns must sum to mu")
        if np.max(np.abs(self.phi.sum(1) - zeta)) > tol:
            raise ConstraintError("phi rows must sum to zeta")


def variational_from_logd(logd, vp, order=2.0):
    a = order
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = a * np.log(vp.phi) + (1.0 - a) * np.log(vp.psi) + (a - 1.0) * logd
    terms = np.where(vp.phi > 0, terms, -np.inf)
    if np.any((vp.phi > 0) & (vp.psi <= 0)):
        return math.inf
    return _exp(logsumexp(terms) / (a - 1.0))


def bound_variational(spec, vp, order=2.0):
    vp.check(spec.zeta, spec.mu)
    return variational_from_logd(log_pairwise(spec, order)[0], vp, order)


def _normalize_log(logits, axis, total, fallback):
    """Rows/columns of ``exp(logits)`` rescaled to sum to ``total``."""
    norm = logsumexp(logits, axis=axis, keepdims=True)
    dead = ~np.isfinite(norm)
    with np.errstate(invalid="ignore"):
        out = np.exp(logits - norm) * total
    if np.any(dead):
        warnings.warn("all-zero variational slice; falling back to uniform", RuntimeWarning)
        out = np.where(np.broadcast_to(dead, out.shape), fallback, out)
    return out


def psi_given_phi_from_logd(logd, zeta, mu, phi, order=2.0):
    c = (order - 1.0) / order
    with np.errstate(divide="ignore"):
        logits = np.log(phi) + c * logd
    fallback = np.tile(np.asarray(mu) / len(zeta), (len(zeta), 1))
    return _normalize_log(logits, 0, np.asarray(mu)[None, :], fallback)


def phi_given_psi_from_logd(logd, zeta, mu, psi, order=2.0):
    with np.errstate(divide="ignore"):
        logits = np.log(psi) - logd
    fallback = np.tile(np.asarray(zeta)[:, None] / len(mu), (1, len(mu)))
    return _normalize_log(logits, 1, np.asarray(zeta)[:, None], fallback)


def optimal_psi_given_phi(spec, phi, order=2.0):
    logd = log_pairwise(spec, order)[0]
    return psi_given_phi_from_logd(logd, spec.zeta, spec.mu, phi, order)


def optimal_phi_given_psi(spec, psi, order=2.0):
    logd = log_pairwise(spec, order)[0]
    return phi_given_psi_from_logd(logd, spec.zeta, spec.mu, psi, order)


def direct_opt_from_logd(logd, zeta, mu, order=2.0, warm_start=None, iters=20):
    if iters < 1:
        raise DomainError("iters must be >= 1")
    vp = warm_start or VariationalParams.uniform(zeta, mu)
    psi = vp.psi
    for _ in range(iters):
        phi = phi_given_psi_from_logd(logd, zeta, mu, psi, order)
        psi = psi_given_phi_from_logd(logd, zeta, mu, phi, order)
    vp = VariationalParams(psi, phi_given_psi_from_logd(logd, zeta, mu, psi, order))
    return variational_from_logd(logd, vp, order), vp


def bound_direct_opt(spec, warm_start=None, iters=20, order=2.0):
    """Block-coordinate minimization of the variational bound.

    Starting from uniform matrices (or ``warm_start``), alternate the
    closed-form optimal ``phi`` given ``psi`` and ``psi`` given ``phi``.
    Each update cannot increase the bound. Returns ``(bound, params)``.
    """
    if warm_start is not None:
        warm_start.check(spec.zeta, spec.mu)
    logd = log_pairwise(spec, order)[0]
    return direct_opt_from_logd(logd, spec.zeta, spec.mu, order, warm_start, iters)


# -- bounds with gradients (order 2) ---------------------------------------

class BoundEvaluator:
    """Evaluate one bound method and its derivative w.r.t. ``logd``.

    Calling returns ``(log_bound, log_grad)``, both in log space so that
    saturated divergences do not overflow.

    For the direct-optimization methods the derivative holds the
    variational parameters fixed at their optimized value. The
    ``direct_no_reset`` variant keeps those parameters between calls.
    """

    def __init__(self, method="psi_first", iters=20):
        if method not in METHODS:
            raise DomainError(f"unknown bound method {method!r}")
        self.method = method
        self.iters = iters
        self.state = None

    def reset(self):
        self.state = None

    def __call__(self, logd, zeta, mu):
        lz, lm = _logs(zeta), _logs(mu)
        m = self.method
        if m in ("psi_first", "uniform_psi"):
            inner = logsumexp(lm[None, :] - logd, axis=1)          # log S_i
            if m == "psi_first":
                log_u = 2.0 * logsumexp(lz - 0.5 * inner)
                log_g = (0.5 * log_u + lz - 1.5 * inner)[:, None] + lm[None, :] - logd
            else:
                log_u = math.log(len(zeta)) + logsumexp(2 * lz - inner)
                log_g = (math.log(len(zeta)) + 2 * lz - 2 * inner)[:, None] + lm[None, :] - logd
        elif m in ("phi_first", "uniform_phi"):
            inner = logsumexp(lz[:, None] + 0.5 * logd, axis=0)   # log V_j
            if m == "phi_first":
                log_u = -logsumexp(lm - 2 * inner)
                log_g = (2 * log_u + lm - 3 * inner)[None, :] + lz[:, None] + 0.5 * logd
            else:
                log_k = math.log(len(mu))
                log_u = -2 * log_k + logsumexp(-lm + 2 * inner)
                log_g = (-2 * log_k - lm + inner)[None, :] + lz[:, None] + 0.5 * logd
        else:
            warm = self.state if m == "direct_no_reset" else None
            _, vp = direct_opt_from_logd(logd, zeta, mu, 2.0, warm, self.iters)
            if m == "direct_no_reset":
                self.state = vp
            with np.errstate(divide="ignore", invalid="ignore"):
                log_g = 2 * np.log(vp.phi) - np.log(vp.psi) + logd
            log_g = np.where(vp.phi > 0, log_g, -np.inf)
            log_u = logsumexp(log_g)
        return float(log_u), log_g


def mixture_grad(spec, dlogd, order=2.0):
    """Chain ``dU/dlogd`` to gradients w.r.t. future means, past means, log sigma."""
    f, p = spec.future_means, spec.past_means
    inv_var = spec.sigma ** -2.0
    row, col = dlogd.sum(1)[:, None], dlogd.sum(0)[:, None]
    g_future = order * (row * f - dlogd @ p) * inv_var
    g_past = -order * (dlogd.T @ f - col * p) * inv_var
    sq = (row * f ** 2).sum(0) - 2.0 * (f * (dlogd @ p)).sum(0) + (col * p ** 2).sum(0)
    g_log_sigma = -order * sq * inv_var
    return g_future, g_past, g_log_sigma


# -- quadrature oracle ---------------------------------------------------

def _mixture_logpdf(x, means, sigma, weights):
    z = (x[:, None] - means[None, :]) / sigma
    return logsumexp(-0.5 * z ** 2 + _logs(weights)[None, :], axis=1) \
        - math.log(sigma) - 0.5 * math.log(2 * math.pi)


def mixture_renyi_quadrature(spec, order=2.0, tol=1e-10):
    """Exponentiated Renyi divergence of two 1-D mixtures by adaptive quadrature."""
    if spec.future_means.shape[1] != 1:
        raise DomainError("quadrature oracle supports 1-D mixtures only")
    a = order
    fm, pm, s = spec.future_means[:, 0], spec.past_means[:, 0], float(spec.sigma[0])
    peaks = (a * fm[:, None] - (a - 1.0) * pm[None, :]).ravel()
    pts = np.concatenate([fm, pm, peaks])
    lo, hi = pts.min() - 12 * s, pts.max() + 12 * s

    def log_f(x):
        x = np.atleast_1d(x)
        return (a * _mixture_logpdf(x, fm, s, spec.zeta)
                + (1.0 - a) * _mixture_logpdf(x, pm, s, spec.mu))

    grid = np.linspace(lo, hi, 4001)
    offset = float(np.max(log_f(grid)))
    inner = np.unique(np.clip(pts, lo, hi))
    val, _ = integrate.quad(lambda x: math.exp(log_f(x)[0] - offset), lo, hi,
                            points=inner[(inner > lo) & (inner < hi)],
                            epsabs=0.0, epsrel=tol, limit=1000)
    return math.exp((math.log(val) + offset) / (a - 1.0))


# -- variance and confidence bounds ----------------------------------------

def variance_bound(R_max, cfg, divergence):
    """Upper bound on the variance of the combined objective."""
    if divergence < 1.0:
        raise DomainError("an exponentiated divergence is at least 1")
    return 2.0 * R_max ** 2 * (c_gamma(cfg.gamma, cfg.alpha) ** 2
                               + c_gamma(cfg.gamma, cfg.beta) ** 2 * divergence)


def cantelli_lower_bound(J_bar, delta, R_max, cfg, B):
    """Value that the expected objective exceeds with probability ``1 - delta``."""
    if not 0.0 < delta < 1.0:
        raise DomainError("delta must lie in (0, 1)")
    spread = c_gamma(cfg.gamma, cfg.alpha) ** 2 + c_omega(cfg.omega, cfg.alpha) * B
    return J_bar - math.sqrt((1.0 - delta) / delta * 2.0 * R_max ** 2 * spread)


def bound_by_method(spec, method, order=2.0, iters=20, warm_start=None):
    logd = log_pairwise(spec, order)[0]
    z, m = spec.zeta, spec.mu
    if method == "psi_first":
        return psi_first_from_logd(logd, z, m, order)
    if method == "phi_first":
        return phi_first_from_logd(logd, z, m, order)
    if method == "uniform_psi":
        return uniform_psi_from_logd(logd, z, m, order)
    if method == "uniform_phi":
        return uniform_phi_from_logd(logd, z, m, order)
    if method in ("direct_reset", "direct_no_reset"):
        return direct_opt_from_logd(logd, z, m, order, warm_start, iters)[0]
    raise DomainError(f"unknown bound method {method!r}")


def random_instance(rng, max_components=5, mean_range=3.0, sigma_range=(0.75, 1.5)):
    """Random pair of 1-D mixtures with a shared scale and Dirichlet weights."""
    L, K = rng.integers(1, max_components + 1, size=2)
    sigma = rng.uniform(*sigma_range)
    return MixtureSpec.build(rng.uniform(-mean_range, mean_range, (L, 1)),
                             rng.uniform(-mean_range, mean_range, (K, 1)), [sigma],
                             rng.dirichlet(np.ones(L)), rng.dirichlet(np.ones(K)))


def all_bounds(spec, order=2.0, iters=20):
    """Every bound method on one instance; no-reset warm-starts from the reset result."""
    logd = log_pairwise(spec, order)[0]
    z, m = spec.zeta, spec.mu
    out = {"psi_first": psi_first_from_logd(logd, z, m, order),
           "phi_first": phi_first_from_logd(logd, z, m, order),
           "uniform_psi": uniform_psi_from_logd(logd, z, m, order),
           "uniform_phi": uniform_phi_from_logd(logd, z, m, order)}
    out["direct_reset"], vp = direct_opt_from_logd(logd, z, m, order, None, iters)
    out["direct_no_reset"] = direct_opt_from_logd(logd, z, m, order, vp, iters)[0]
    return out
