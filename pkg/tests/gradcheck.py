"""Finite-difference helpers shared by the gradient tests and the acceptance run."""
import numpy as np

from polis.estimation import EstimatorConfig, Window
from polis.hyper_policy import GaussianHyperPolicy, Sinusoid, Stationary, TemporalConvNet

FD_STEP = 1e-5
KINK_MARGIN = 1e-3


def rel_err(a, b, floor=1e-6):
    return float(np.max(np.abs(a - b)) / max(np.max(np.abs(b)), floor))


def central_diff(f, x, eps=FD_STEP, coords=None):
    coords = range(len(x)) if coords is None else coords
    out = []
    for i in coords:
        e = np.zeros_like(x)
        e[i] = eps
        out.append((f(x + e) - f(x - e)) / (2 * eps))
    return np.array(out)


def check_coords(hp, rng, max_coords=24):
    """All coordinates for small models; a random subset plus log sigma otherwise."""
    n = hp.n_rho
    if n <= max_coords:
        return np.arange(n)
    n_w = hp.mean_fn.n_params
    picked = rng.choice(n_w, size=max_coords, replace=False)
    return np.sort(np.concatenate([picked, np.arange(n_w, n)]))


def make_hp(kind, rng, dim=2, learn_sigma=True):
    mf = {"stationary": Stationary(dim), "sinusoid": Sinusoid(dim),
          "tcn": TemporalConvNet(dim)}[kind]
    hp = GaussianHyperPolicy.initialize(mf, rng, log_sigma=rng.uniform(-0.5, 0.3),
                                        learn_sigma=learn_sigma)
    return hp.with_rho(hp.rho + 0.2 * rng.standard_normal(hp.n_rho))


def near_kink(hp, times, margin=KINK_MARGIN):
    """True when a ReLU pre-activation sits close enough to 0 to spoil a central difference."""
    if not isinstance(hp.mean_fn, TemporalConvNet):
        return False
    _, (_, cache, _) = hp.mean_fn._forward_uncached(hp.weights, np.asarray(times), True)
    return any(np.min(np.abs(pre)) < margin for _, pre in cache)


def window_from(hp, T, alpha, rng, context=None, noise=0.1):
    """Window sampled from ``hp``; rewards from a quadratic bandit."""
    times = np.arange(T - alpha + 1, T + 1)
    thetas = hp.means(times) + hp.sigma * rng.standard_normal((alpha, hp.dim))
    c = np.zeros(alpha) if context is None else context[times]
    rewards = -np.sum((thetas - c[:, None]) ** 2, axis=1) + noise * rng.standard_normal(alpha)
    return Window(times, thetas, rewards, c, np.zeros((alpha, 1)))


def random_case(rng, kind=None):
    """Random (hp, window, cfg) at a point where the surrogate is differentiable."""
    while True:
        k = kind or rng.choice(["sinusoid", "tcn"])
        alpha, beta = int(rng.integers(2, 9)), int(rng.integers(1, 7))
        cfg = EstimatorConfig(alpha, beta, gamma=rng.uniform(0.8, 1.0),
                              omega=rng.uniform(0.8, 1.0))
        hp = make_hp(k, rng)
        T = int(rng.integers(alpha, 40))
        if not near_kink(hp, np.arange(T - alpha + 1, T + beta + 1)):
            return hp, window_from(hp, T, alpha, rng), cfg


def worst_fd_error(cases, grad_fn, value_fn, rng):
    """Largest relative FD error over ``cases`` of (hp, window, cfg, extra)."""
    worst = 0.0
    for hp, w, cfg, extra in cases:
        coords = check_coords(hp, rng)
        g = grad_fn(hp, w, cfg, extra)[coords]
        fd = central_diff(lambda r: value_fn(hp.with_rho(r), w, cfg, extra), hp.rho,
                          coords=coords)
        worst = max(worst, rel_err(g, fd))
    return worst
