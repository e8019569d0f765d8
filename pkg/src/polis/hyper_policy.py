"""Time-conditioned diagonal Gaussian hyper-policies.

A hyper-policy maps a (nonnegative integer) time ``t`` to a Gaussian
distribution over policy parameters ``theta``. The mean is produced by a
:class:`MeanFunction`; the per-dimension standard deviation does not
depend on time and is stored as ``log_sigma``.

The flat parameter vector ``rho`` is laid out as the mean-function
weights followed, when ``learn_sigma`` is set, by ``log_sigma``.
"""
import json
import math

import numpy as np

from .errors import ConfigurationError, DomainError

LOG_2PI = math.log(2.0 * math.pi)
# exp(LOG_D_CAP) is the overflow sentinel for exponentiated divergences
LOG_D_CAP = 700.0


class PositionalEncoding:
    """Parameter-free Fourier embedding of time.

    Entry ``2i`` is ``sin(t / base**(2i/dim))`` and entry ``2i+1`` the
    matching cosine, so every entry lies in [-1, 1].
    """

    def __init__(self, dim=8, base=10000.0):
        if dim <= 0 or dim % 2:
            raise ConfigurationError(f"encoding dimension must be even, got {dim}")
        self.dim = int(dim)
        self.base = float(base)
        i = np.arange(self.dim // 2)
        self.inv_freq = 1.0 / self.base ** (2.0 * i / self.dim)
        self._table = np.zeros((0, self.dim))

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        angles = t[..., None] * self.inv_freq
        out = np.empty(t.shape + (self.dim,))
        out[..., 0::2] = np.sin(angles)
        out[..., 1::2] = np.cos(angles)
        return out

    def lookup(self, times):
        """Encodings of integer ``times`` served from a growing cache."""
        times = np.asarray(times, dtype=np.int64)
        hi = int(times.max()) + 1 if times.size else 0
        if hi > len(self._table):
            grown = max(hi, 2 * len(self._table), 1024)
            self._table = self(np.arange(grown))
        return self._table[times]

    def clear_cache(self):
        self._table = np.zeros((0, self.dim))


def encode_time(t, dim=8, base=10000.0):
    """Positional encoding of a single nonnegative time."""
    if t < 0:
        raise DomainError("time must be nonnegative")
    return PositionalEncoding(dim, base)(t)


class MeanFunction:
    """Deterministic map from (weights, times) to hyper-policy means.

    Subclasses implement ``mean`` for a batch of times and ``vjp``, the
    vector-Jacobian product of the mean with respect to the weights.
    """

    kind = None
    output_dim = 0
    n_params = 0

    def init_params(self, rng):
        raise NotImplementedError

    def mean(self, w, times):
        raise NotImplementedError

    def vjp(self, w, times, grad_mean):
        """Vector-Jacobian product; ``grad_mean`` is ``(n, d)`` or a stack ``(m, n, d)``."""
        raise NotImplementedError

    def check(self, w):
        w = np.asarray(w, dtype=float)
        if w.shape != (self.n_params,):
            raise ConfigurationError(
                f"{self.kind} mean function expects {self.n_params} weights, "
                f"got shape {w.shape}")
        return w

    def jacobian(self, w, t):
        """Dense Jacobian d mean(t) / d w, shape (output_dim, n_params)."""
        times = np.array([t])
        rows = []
        for i in range(self.output_dim):
            g = np.zeros((1, self.output_dim))
            g[0, i] = 1.0
            rows.append(self.vjp(w, times, g))
        return np.array(rows)

    def to_dict(self):
        raise NotImplementedError


class Stationary(MeanFunction):
    """Constant mean vector; ignores time."""

    kind = "stationary"

    def __init__(self, output_dim):
        self.output_dim = int(output_dim)
        self.n_params = self.output_dim

    def init_params(self, rng):
        return np.zeros(self.n_params)

    def mean(self, w, times):
        w = self.check(w)
        times = np.atleast_1d(times)
        return np.broadcast_to(w, (len(times), self.output_dim)).copy()

    def vjp(self, w, times, grad_mean):
        return np.asarray(grad_mean).sum(axis=-2)

    def to_dict(self):
        return {"kind": self.kind, "output_dim": self.output_dim}


class Sinusoid(MeanFunction):
    """Per-dimension ``A sin(freq t + phase) + B``.

    Weights are stored as four blocks: amplitudes, frequencies, phases,
    offsets.
    """

    kind = "sinusoid"

    def __init__(self, output_dim):
        self.output_dim = int(output_dim)
        self.n_params = 4 * self.output_dim

    def init_params(self, rng):
        d = self.output_dim
        return np.concatenate([
            rng.uniform(-1, 1, d), rng.uniform(0.01, 0.1, d),
            rng.uniform(-np.pi, np.pi, d), np.zeros(d)])

    def split(self, w):
        return np.split(self.check(w), 4)

    def mean(self, w, times):
        amp, freq, phase, off = self.split(w)
        t = np.atleast_1d(np.asarray(times, dtype=float))[:, None]
        return amp * np.sin(freq * t + phase) + off

    def vjp(self, w, times, grad_mean):
        amp, freq, phase, _ = self.split(w)
        t = np.atleast_1d(np.asarray(times, dtype=float))[:, None]
        g = np.asarray(grad_mean)
        arg = freq * t + phase
        s, c = np.sin(arg), np.cos(arg)
        return np.concatenate([
            (g * s).sum(-2), (g * amp * c * t).sum(-2),
            (g * amp * c).sum(-2), g.sum(-2)], axis=-1)

    def to_dict(self):
        return {"kind": self.kind, "output_dim": self.output_dim}


class TemporalConvNet(MeanFunction):
    """Causal dilated convolutions over positional encodings of time.

    The mean at time ``t`` is computed from the encodings of
    ``t - b, ..., t`` where ``b = 2**(l-1) * (k-1)`` is the receptive
    field; times below zero are clamped to zero. Layer ``i`` has dilation
    ``2**i``, a ReLU follows every convolution and an affine head maps
    the last position to the output. Each layer left-pads with zeros so
    the sequence length stays ``b + 1``.
    """

    kind = "tcn"

    def __init__(self, output_dim, enc_dim=8, channels=(8, 8, 4),
                 kernel_size=3, base=10000.0):
        if kernel_size < 2:
            raise ConfigurationError("kernel size must be at least 2")
        if not channels:
            raise ConfigurationError("at least one convolution layer is needed")
        self.output_dim = int(output_dim)
        self.encoding = PositionalEncoding(enc_dim, base)
        self.channels = tuple(int(c) for c in channels)
        self.kernel_size = int(kernel_size)
        self.n_layers = len(self.channels)
        self.dilations = tuple(2 ** i for i in range(self.n_layers))
        self.receptive_field = 2 ** (self.n_layers - 1) * (self.kernel_size - 1)

        # (name, shape, fan_in) for every weight block in layout order
        self.blocks = []
        c_in = self.encoding.dim
        for i, c_out in enumerate(self.channels):
            fan = c_in * self.kernel_size
            self.blocks.append((f"conv{i}.weight", (c_out, c_in, self.kernel_size), fan))
            self.blocks.append((f"conv{i}.bias", (c_out,), fan))
            c_in = c_out
        self.blocks.append(("head.weight", (self.output_dim, c_in), c_in))
        self.blocks.append(("head.bias", (self.output_dim,), c_in))
        self.n_params = sum(int(np.prod(s)) for _, s, _ in self.blocks)
        self._plan = self._tap_plan()
        self._memo = {}

    def _tap_plan(self):
        # Only the last position reaches the head, so each layer is evaluated
        # at the positions the layer above reads. For every layer returns an
        # index array (n_out, k) into its input positions; -1 marks padding.
        k, top = self.kernel_size, self.receptive_field
        needed = [[top]]
        for dil in reversed(self.dilations[1:]):
            below = {p - (k - 1 - j) * dil for p in needed[0] for j in range(k)}
            needed.insert(0, sorted(q for q in below if q >= 0))
        inputs = [list(range(top + 1))] + needed[:-1]
        plan = []
        for dil, out, inp in zip(self.dilations, needed, inputs):
            where = {q: i for i, q in enumerate(inp)}
            idx = np.array([[where.get(p - (k - 1 - j) * dil, -1) for j in range(k)]
                            for p in out])
            plan.append(idx)
        return plan

    def init_params(self, rng):
        parts = []
        for _, shape, fan in self.blocks:
            bound = 1.0 / math.sqrt(fan)
            parts.append(rng.uniform(-bound, bound, int(np.prod(shape))))
        return np.concatenate(parts)

    def unpack(self, w):
        w = self.check(w)
        out, pos = [], 0
        for _, shape, _ in self.blocks:
            size = int(np.prod(shape))
            out.append(w[pos:pos + size].reshape(shape))
            pos += size
        return out

    def window_times(self, times):
        times = np.atleast_1d(np.asarray(times, dtype=np.int64))
        offsets = np.arange(-self.receptive_field, 1)
        return np.maximum(times[:, None] + offsets, 0)

    def encode(self, times, cached=True):
        win = self.window_times(times)
        if cached:
            return self.encoding.lookup(win)
        return self.encoding(win)

    def _forward(self, w, times, cached=True):
        # training evaluates mean and vjp at the same (w, times) several times
        key = (np.asarray(w, dtype=float).tobytes(), np.asarray(times).tobytes(), cached)
        hit = self._memo.get(key)
        if hit is None:
            hit = self._forward_uncached(w, times, cached)
            if len(self._memo) >= 4:
                self._memo.pop(next(iter(self._memo)))
            self._memo[key] = hit
        return hit

    def _forward_uncached(self, w, times, cached):
        blocks = self.unpack(w)
        x = self.encode(times, cached)
        n = x.shape[0]
        k = self.kernel_size
        cache = []
        for i, idx in enumerate(self._plan):
            weight, bias = blocks[2 * i], blocks[2 * i + 1]
            # a trailing zero column serves every padded tap (index -1)
            x_ext = np.concatenate([x, np.zeros((n, 1, x.shape[2]))], axis=1)
            taps = x_ext[:, idx, :].reshape(n * len(idx), -1)
            w2 = weight.transpose(2, 1, 0).reshape(-1, weight.shape[0])
            pre = (taps @ w2).reshape(n, len(idx), -1) + bias
            cache.append((taps, pre))
            x = np.maximum(pre, 0.0)
        head_w, head_b = blocks[-2], blocks[-1]
        last = x[:, -1, :]
        return last @ head_w.T + head_b, (blocks, cache, last)

    def mean(self, w, times, cached=True):
        return self._forward(w, times, cached)[0].copy()

    def vjp(self, w, times, grad_mean):
        _, (blocks, cache, last) = self._forward(w, times)
        g = np.asarray(grad_mean, dtype=float)
        single = g.ndim == 2
        if single:
            g = g[None]
        m = g.shape[0]
        head_w = blocks[-2]
        grads = [None] * len(blocks)
        grads[-2] = np.swapaxes(g, 1, 2) @ last
        grads[-1] = g.sum(1)

        k = self.kernel_size
        g_act = (g @ head_w)[:, :, None, :]
        for i in reversed(range(self.n_layers)):
            taps, pre = cache[i]
            weight = blocks[2 * i]
            c_out, c_in = weight.shape[:2]
            g_pre = (g_act * (pre > 0)).reshape(m, -1, c_out)
            # weight gradient over all taps at once: (m, c_out, k * c_in)
            gw = np.swapaxes(g_pre, 1, 2) @ taps
            grads[2 * i] = gw.reshape(m, c_out, k, c_in).transpose(0, 1, 3, 2)
            grads[2 * i + 1] = g_pre.sum(1)
            if i:
                idx = self._plan[i]
                w_all = np.ascontiguousarray(weight.transpose(0, 2, 1).reshape(c_out, -1))
                back = (g_pre.reshape(-1, c_out) @ w_all).reshape(
                    (m,) + pre.shape[:2] + (k, c_in))
                n_in = len(self._plan[i - 1])
                g_x = np.zeros((m, pre.shape[0], n_in + 1, c_in))
                for j in range(k):
                    # within one tap the targets are distinct except padding
                    g_x[:, :, idx[:, j], :] += back[:, :, :, j, :]
                g_act = g_x[:, :, :-1, :]
        out = np.concatenate([gr.reshape(m, -1) for gr in grads], axis=1)
        return out[0] if single else out

    def to_dict(self):
        return {"kind": self.kind, "output_dim": self.output_dim,
                "enc_dim": self.encoding.dim, "channels": list(self.channels),
                "kernel_size": self.kernel_size, "base": self.encoding.base}


def mean_function_from_dict(d):
    d = dict(d)
    kind = d.pop("kind")
    if kind == Stationary.kind:
        return Stationary(**d)
    if kind == Sinusoid.kind:
        return Sinusoid(**d)
    if kind == TemporalConvNet.kind:
        return TemporalConvNet(**d)
    raise ConfigurationError(f"unknown mean function kind {kind!r}")


class GaussianHyperPolicy:
    """Diagonal Gaussian over policy parameters with time-dependent mean.

    Instances are treated as immutable; :meth:`with_rho` returns an
    updated copy.
    """

    def __init__(self, mean_fn, weights, log_sigma, learn_sigma=False):
        self.mean_fn = mean_fn
        self.weights = mean_fn.check(weights).copy()
        log_sigma = np.asarray(log_sigma, dtype=float)
        if log_sigma.ndim == 0:
            log_sigma = np.full(mean_fn.output_dim, float(log_sigma))
        if log_sigma.shape != (mean_fn.output_dim,):
            raise ConfigurationError(
                f"log_sigma must have {mean_fn.output_dim} entries")
        self.log_sigma = log_sigma.copy()
        self.learn_sigma = bool(learn_sigma)
        self.weights.flags.writeable = False
        self.log_sigma.flags.writeable = False

    @classmethod
    def initialize(cls, mean_fn, rng, log_sigma=-1.0, learn_sigma=False):
        return cls(mean_fn, mean_fn.init_params(rng), log_sigma, learn_sigma)

    @property
    def dim(self):
        return self.mean_fn.output_dim

    @property
    def sigma(self):
        return np.exp(self.log_sigma)

    @property
    def rho(self):
        if self.learn_sigma:
            return np.concatenate([self.weights, self.log_sigma])
        return self.weights.copy()

    @property
    def n_rho(self):
        return self.mean_fn.n_params + (self.dim if self.learn_sigma else 0)

    def with_rho(self, rho):
        rho = np.asarray(rho, dtype=float)
        if rho.shape != (self.n_rho,):
            raise ConfigurationError(f"expected rho of length {self.n_rho}, got {rho.shape}")
        n = self.mean_fn.n_params
        log_sigma = rho[n:] if self.learn_sigma else self.log_sigma
        return GaussianHyperPolicy(self.mean_fn, rho[:n], log_sigma, self.learn_sigma)

    def with_log_sigma(self, log_sigma, learn_sigma=None):
        learn = self.learn_sigma if learn_sigma is None else learn_sigma
        return GaussianHyperPolicy(self.mean_fn, self.weights, log_sigma, learn)

    def means(self, times):
        """Means at an array of times, shape (n, dim)."""
        return self.mean_fn.mean(self.weights, np.atleast_1d(times))

    def mean(self, t):
        return self.means(np.array([t]))[0]

    def sample(self, t, rng, size=None):
        mu = self.mean(t)
        shape = mu.shape if size is None else (size,) + mu.shape
        return mu + self.sigma * rng.standard_normal(shape)

    def log_density(self, theta, t):
        theta = np.asarray(theta, dtype=float)
        if not np.all(np.isfinite(theta)):
            raise DomainError("theta must be finite")
        return gaussian_log_density(theta, self.mean(t), self.log_sigma)

    def backprop(self, times, grad_mean, grad_log_sigma=None):
        """Map gradients w.r.t. means (and log sigma) onto the rho layout.

        A stacked ``grad_mean`` of shape ``(m, n, dim)`` with
        ``grad_log_sigma`` of shape ``(m, dim)`` gives ``m`` gradients in
        one pass.
        """
        g = self.mean_fn.vjp(self.weights, np.atleast_1d(times), grad_mean)
        if not self.learn_sigma:
            return g
        if grad_log_sigma is None:
            grad_log_sigma = np.zeros(g.shape[:-1] + (self.dim,))
        return np.concatenate([g, grad_log_sigma], axis=-1)

    def grad_log_density(self, theta, t):
        """Score of the density at ``theta`` w.r.t. rho."""
        theta = np.asarray(theta, dtype=float)
        mu = self.mean(t)
        z = (theta - mu) / self.sigma
        return self.backprop([t], (z / self.sigma)[None, :], z ** 2 - 1.0)

    def log_renyi2(self, s, t):
        """Log of the exponentiated order-2 Renyi divergence, uncapped."""
        m = self.means(np.array([s, t]))
        return float(np.sum((m[0] - m[1]) ** 2 / self.sigma ** 2))

    def renyi2_exp(self, s, t):
        """d_2(nu(.|s) || nu(.|t)); saturates at exp(LOG_D_CAP)."""
        return math.exp(min(self.log_renyi2(s, t), LOG_D_CAP))

    def to_dict(self):
        return {"mean_function": self.mean_fn.to_dict(),
                "weights": self.weights.tolist(),
                "log_sigma": self.log_sigma.tolist(),
                "learn_sigma": self.learn_sigma}

    def to_json(self):
        return json.dumps(self.to_dict())

    @classmethod
    def from_dict(cls, d):
        mf = mean_function_from_dict(d["mean_function"])
        return cls(mf, np.array(d["weights"], dtype=float),
                   np.array(d["log_sigma"], dtype=float), d["learn_sigma"])

    @classmethod
    def from_json(cls, text):
        return cls.from_dict(json.loads(text))


def gaussian_log_density(theta, mu, log_sigma):
    """Diagonal Gaussian log-density; broadcasts over leading axes."""
    z = (theta - mu) * np.exp(-log_sigma)
    return -0.5 * np.sum(z ** 2, axis=-1) - np.sum(log_sigma) - 0.5 * len(log_sigma) * LOG_2PI
