"""Lifelong training loop, stationary baseline and bound comparison runs.

A run has a behavioral phase, where parameters are drawn from a broad
copy of the initial hyper-policy, followed by a target phase. At every
``h``-th target step, before acting, the hyper-policy is retrained for
``N`` epochs on the most recent ``alpha`` records.

Seeding: ``SeedSequence(seed).spawn(4)`` yields, in order, the streams
for the exogenous trace, the initial hyper-policy weights, parameter
sampling while acting, and replays during training.
"""
import csv
import dataclasses
import hashlib
import json
import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .divergence_bounds import METHODS, BoundEvaluator
from .environments import make_env
from .errors import ConfigurationError, DegenerateEstimateError
from .estimation import EstimatorConfig, History
from .hyper_policy import GaussianHyperPolicy, Sinusoid, Stationary, TemporalConvNet
from .objective import OptimizerState, SurrogateConfig, optimizer_step, penalty_terms, train

log = logging.getLogger(__name__)

BEHAVIORAL_LOG_SIGMA = 0.5
SCHEMA_VERSION = 1


@dataclass(frozen=True)
class RunConfig:
    env: str = "vasicek"
    env_params: dict = field(default_factory=dict)
    method: str = "polis"
    alpha: int = 500
    beta: int = 500
    gamma: float = 1.0
    omega: float = 1.0
    lam: float = 10.0
    h: int = 50
    epochs: int = 100
    behavioral_length: int = None
    target_length: int = 500
    n_replays: int = 100
    learn_sigma: bool = False
    init_log_sigma: float = -1.0
    arch: str = "tcn"
    arch_params: dict = field(default_factory=dict)
    bound: str = "psi_first"
    credit: str = "immediate"
    seed: int = 0

    def __post_init__(self):
        if self.behavioral_length is None:
            object.__setattr__(self, "behavioral_length", self.alpha)
        if self.behavioral_length < self.alpha:
            raise ConfigurationError("behavioral_length must be >= alpha")
        if self.h < 1 or self.epochs < 1:
            raise ConfigurationError("h and epochs must be >= 1")
        if self.target_length < 1:
            raise ConfigurationError("target_length must be >= 1")
        if self.method not in ("polis", "stationary"):
            raise ConfigurationError(f"unknown method {self.method!r}")
        if self.arch not in ("tcn", "sinusoid", "stationary"):
            raise ConfigurationError(f"unknown architecture {self.arch!r}")
        if self.bound not in METHODS:
            raise ConfigurationError(f"unknown bound {self.bound!r}")
        EstimatorConfig(self.alpha, self.beta, self.gamma, self.omega)
        SurrogateConfig(self.lam, self.n_replays, self.bound, self.credit)

    def replace(self, **kw):
        return dataclasses.replace(self, **kw)

    def to_dict(self):
        return dataclasses.asdict(self)

    def config_hash(self):
        text = json.dumps(self.to_dict(), sort_keys=True)
        return hashlib.sha256(text.encode()).hexdigest()[:12]

    @property
    def estimator(self):
        return EstimatorConfig(self.alpha, self.beta, self.gamma, self.omega)

    @property
    def surrogate(self):
        return SurrogateConfig(self.lam, self.n_replays, self.bound, self.credit)


def stationary_variant(cfg):
    """Configuration of the stationary baseline matching ``cfg``."""
    return cfg.replace(method="stationary", arch="stationary", lam=0.0)


def seed_streams(seed):
    env_ss, init_ss, act_ss, replay_ss = np.random.SeedSequence(seed).spawn(4)
    return (int(env_ss.generate_state(1)[0]), np.random.default_rng(init_ss),
            np.random.default_rng(act_ss), np.random.default_rng(replay_ss))


def build_mean_function(cfg, dim):
    if cfg.arch == "stationary" or cfg.method == "stationary":
        return Stationary(dim)
    if cfg.arch == "sinusoid":
        return Sinusoid(dim)
    return TemporalConvNet(dim, **cfg.arch_params)


@dataclass
class RunRecord:
    config: RunConfig
    steps: list
    diagnostics: list
    skipped: list

    @property
    def target_steps(self):
        return [r for r in self.steps if r["phase"] == "target"]

    @property
    def target_return(self):
        steps = self.target_steps
        return steps[-1]["cum_return"] if steps else 0.0

    @property
    def n_retrains(self):
        return sum(r["retrain"] for r in self.steps)

    def step_rows(self):
        h = self.config.config_hash()
        dim = len(self.steps[0]["theta"]) if self.steps else 0
        header = (["config_hash", "seed", "t", "phase"] + [f"theta_{i}" for i in range(dim)]
                  + ["action", "reward", "cum_return", "retrain"])
        rows = [[h, self.config.seed, r["t"], r["phase"]] + [repr(v) for v in r["theta"]]
                + [repr(r["action"]), repr(r["reward"]), repr(r["cum_return"]), r["retrain"]]
                for r in self.steps]
        return header, rows

    def diagnostic_rows(self):
        h = self.config.config_hash()
        keys = ["retrain", "t", "epoch", "J_past", "J_future", "B", "penalty",
                "saturated", "norm_future", "norm_past", "norm_penalty"]
        rows = [[h, self.config.seed] + [_fmt(d[k]) for k in keys] for d in self.diagnostics]
        return ["config_hash", "seed"] + keys, rows

    def to_csv(self, path):
        write_csv(path, *self.step_rows())

    def write_sidecar(self, path, extra=None):
        meta = {"schema_version": SCHEMA_VERSION, "config": self.config.to_dict(),
                "config_hash": self.config.config_hash(),
                "target_return": self.target_return, "n_retrains": self.n_retrains,
                "skipped_retrains": self.skipped}
        meta.update(extra or {})
        with open(path, "w") as fh:
            json.dump(meta, fh, indent=2, sort_keys=True)


def _fmt(v):
    if isinstance(v, float):
        return repr(v)
    return v


def write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        w.writerows(rows)


def run_lifelong(cfg, retrain_trigger=None):
    """Act for ``behavioral_length + target_length`` steps, retraining on schedule.

    ``retrain_trigger(t, history)`` may request extra retrains during the
    target phase; none is installed by default.
    """
    env_seed, init_rng, act_rng, replay_rng = seed_streams(cfg.seed)
    total = cfg.behavioral_length + cfg.target_length
    env = make_env(cfg.env, total, env_seed, **cfg.env_params)
    ecfg, scfg = cfg.estimator, cfg.surrogate
    stationary = cfg.method == "stationary"

    mean_fn = build_mean_function(cfg, env.policy_dim)
    hp = GaussianHyperPolicy.initialize(mean_fn, init_rng, cfg.init_log_sigma, cfg.learn_sigma)
    behavioral = hp.with_log_sigma(BEHAVIORAL_LOG_SIGMA, learn_sigma=False)
    history = History(cfg.alpha, env.policy_dim, env.dim_c)
    opt_state = OptimizerState.fresh(hp.n_rho)
    evaluator = BoundEvaluator(cfg.bound)

    n_scheduled = cfg.target_length // cfg.h
    steps, diagnostics, skipped = [], [], []
    cum, retrains, scheduled = 0.0, 0, 0
    for t in range(total):
        target = t >= cfg.behavioral_length
        tau = t - cfg.behavioral_length
        if target and tau == 0:
            cum = 0.0
        retrain = False
        on_schedule = target and tau % cfg.h == 0 and scheduled < n_scheduled
        scheduled += on_schedule
        if on_schedule or (target and retrain_trigger is not None
                           and retrain_trigger(t, history)):
            retrain = True
            retrains += 1
            window = history.window(cfg.alpha, now=t - 1)
            try:
                hp, opt_state, rows = train(env, window, hp, ecfg, scfg, cfg.epochs,
                                            replay_rng, opt_state, evaluator,
                                            use_future=not stationary)
                diagnostics.extend(dict(r, retrain=retrains, t=t) for r in rows)
            except DegenerateEstimateError as err:
                log.warning("retrain at t=%d skipped: %s", t, err)
                skipped.append({"t": t, "reason": str(err)})
        actor = hp if target else behavioral
        theta = actor.sample(t, act_rng)
        xc, xu = env.state()
        action, reward = env.step(theta)
        history.append(t, theta, reward, xu, xc)
        cum += reward
        steps.append({"t": t, "phase": "target" if target else "behavioral",
                      "theta": [float(v) for v in theta], "action": action,
                      "reward": reward, "cum_return": cum, "retrain": int(retrain)})
    return RunRecord(cfg, steps, diagnostics, skipped)


def run_baseline_stationary(cfg):
    return run_lifelong(stationary_variant(cfg))


# -- bound comparison ----------------------------------------------------------

@dataclass(frozen=True)
class BoundComparisonConfig:
    alpha: int = 100
    beta: int = 50
    steps: int = 2000
    log_every: int = 100
    amplitude: float = 1.0
    freq: float = 2 * math.pi / 50
    log_sigma: float = -1.0
    lam: float = 1.0
    methods: tuple = METHODS
    iters: int = 20


def run_bound_comparison(cfg=BoundComparisonConfig()):
    """Optimize only the variance penalty of a sinusoidal hyper-policy.

    Returns one row per method and logged step with the amplitude ``A``
    and the log of the d_2 bound.
    """
    ecfg = EstimatorConfig(cfg.alpha, cfg.beta)
    T = cfg.alpha - 1
    rows = []
    for method in cfg.methods:
        mf = Sinusoid(1)
        w0 = np.array([cfg.amplitude, cfg.freq, 0.0, 0.0])
        hp = GaussianHyperPolicy(mf, w0, cfg.log_sigma)
        scfg = SurrogateConfig(cfg.lam, bound=method)
        evaluator = BoundEvaluator(method, cfg.iters)
        state = OptimizerState.fresh(hp.n_rho)
        for step in range(cfg.steps + 1):
            pen = penalty_terms(T, hp, ecfg, scfg, evaluator)
            if step % cfg.log_every == 0:
                rows.append({"method": method, "step": step,
                             "A": float(hp.weights[0]),
                             "log_bound": pen.log_B + math.log(ecfg.alpha) - 2 * math.log(ecfg.beta)})
            if step < cfg.steps:
                rho, state = optimizer_step(state, hp.rho, pen.grad)
                hp = hp.with_rho(rho)
    return rows
