"""Acceptance criteria, one PASS/FAIL line each.

Run with pytest (lines appear in the terminal summary) or directly with
``python tests/test_acceptance.py``. The two multi-seed experiments are
marked ``slow``; ``-m "not slow"`` skips them.
"""
import math
import sys
import tempfile
import time
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from conftest import ACCEPTANCE_LINES  # noqa: E402
from gradcheck import random_case, worst_fd_error  # noqa: E402
from polis.cli import ENV_DEFAULTS, main  # noqa: E402
from polis.divergence_bounds import (METHODS, MixtureSpec, all_bounds,  # noqa: E402
                                     mixture_renyi_quadrature, random_instance)
from polis.environments import SinusoidalBandit  # noqa: E402
from polis.estimation import (EstimatorConfig, History, bias_bound,  # noqa: E402
                              bias_bound_tight, future_return)
from polis.harness import (BoundComparisonConfig, RunConfig, run_baseline_stationary,  # noqa: E402
                           run_bound_comparison, run_lifelong)
from polis.hyper_policy import GaussianHyperPolicy, Stationary  # noqa: E402
from polis.objective import (SurrogateConfig, future_gradient_parts, grad_penalty,  # noqa: E402
                             penalty_terms, surrogate)


def report(name, ok, detail):
    line = f"{'PASS' if ok else 'FAIL'} {name}: {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line, flush=True)
    return ok


# -- criteria ------------------------------------------------------------------

def gradient_correctness():
    start = time.perf_counter()
    rng = np.random.default_rng(2024)
    worst = {}
    cases = [random_case(rng) + (None,) for _ in range(50)]
    worst["pathwise"] = worst_fd_error(
        cases, lambda hp, w, cfg, _: future_gradient_parts(w, hp, cfg)[0],
        lambda hp, w, cfg, _: future_return(w, hp, cfg), rng)
    for method in ("psi_first", "phi_first", "uniform_psi", "uniform_phi"):
        cases = [random_case(rng) + (SurrogateConfig(lam=rng.uniform(0.5, 5), bound=method),)
                 for _ in range(50)]
        worst[f"penalty/{method}"] = worst_fd_error(
            cases, lambda hp, w, cfg, scfg: grad_penalty(w, hp, cfg, scfg).penalty,
            lambda hp, w, cfg, scfg: -penalty_terms(w.T, hp, cfg, scfg, with_grad=False).value,
            rng)
    cases = [random_case(rng) + (SurrogateConfig(lam=rng.uniform(0.5, 5)),) for _ in range(50)]
    worst["surrogate"] = worst_fd_error(
        cases,
        lambda hp, w, cfg, scfg: (future_gradient_parts(w, hp, cfg)[0]
                                  + grad_penalty(w, hp, cfg, scfg).penalty),
        lambda hp, w, cfg, scfg: surrogate(w, hp, cfg, scfg), rng)
    elapsed = time.perf_counter() - start
    top = max(worst.values())
    ok = top < 1e-3 and elapsed < 60
    return report("gradient correctness", ok,
                  f"worst relative error {top:.2e} over {len(worst)} checks x 50 points "
                  f"(< 1e-3), {elapsed:.1f} s (< 60 s)")


def estimator_unbiasedness():
    start = time.perf_counter()
    alpha, beta, reps = 20, 10, 500
    cfg = EstimatorConfig(alpha, beta)
    hp = GaussianHyperPolicy(Stationary(1), [0.4], math.log(0.6))
    rng = np.random.default_rng(7)
    est = []
    for rep in range(reps):
        env = SinusoidalBandit(alpha + 1, seed=rep, amplitude=0.0, noise=0.1)
        h = History(alpha, 1)
        for t in range(alpha):
            theta = hp.sample(t, rng)
            xc, xu = env.state()
            h.append(t, theta, env.step(theta)[1], xu, xc)
        est.append(future_return(h, hp, cfg))
    truth = beta * (-(0.4 ** 2) - 0.36)
    se = np.std(est, ddof=1) / math.sqrt(reps)
    gap = abs(np.mean(est) - truth)
    elapsed = time.perf_counter() - start
    return report("estimator unbiasedness", gap < 3 * se and elapsed < 60,
                  f"mean {np.mean(est):.5f} vs analytic {truth:.5f}, |gap| = {gap / se:.2f} SE "
                  f"(< 3), {elapsed:.1f} s")


def equal_component_instance(rng):
    L, K = rng.integers(1, 6, size=2)
    m = rng.uniform(-3, 3, (1, 1))
    return MixtureSpec.build(np.tile(m, (L, 1)), np.tile(m, (K, 1)), [rng.uniform(0.5, 2)],
                             rng.dirichlet(np.ones(L)), rng.dirichlet(np.ones(K)))


def bound_validity():
    start = time.perf_counter()
    rng = np.random.default_rng(11)
    worst = {m: math.inf for m in METHODS}
    for _ in range(200):
        spec = random_instance(rng)
        oracle = mixture_renyi_quadrature(spec)
        for m, value in all_bounds(spec).items():
            worst[m] = min(worst[m], value / oracle - 1.0)
    slack = min(worst.values())
    exact = ("psi_first", "phi_first", "direct_reset", "direct_no_reset")
    dev = 0.0
    for _ in range(50):
        values = all_bounds(equal_component_instance(rng))
        dev = max(dev, max(abs(values[m] - 1.0) for m in exact))
    elapsed = time.perf_counter() - start
    ok = slack >= -1e-6 and dev <= 1e-8 and elapsed < 120
    return report("bound validity", ok,
                  f"min relative slack {slack:.2e} over 200 instances x 6 bounds (>= -1e-6); "
                  f"identical-mixture |bound - 1| <= {dev:.1e} (<= 1e-8); {elapsed:.1f} s")


def amplitude_reduction():
    start = time.perf_counter()
    methods = ("uniform_psi", "psi_first", "phi_first", "direct_reset")
    rows = run_bound_comparison(BoundComparisonConfig(methods=methods))
    traj = {m: np.array([r["A"] for r in rows if r["method"] == m]) for m in methods}
    reached = {m: bool(np.any(np.abs(a) < 0.1)) for m, a in traj.items()}
    gap = float(np.max(np.abs(traj["uniform_psi"] - traj["psi_first"])))
    elapsed = time.perf_counter() - start
    ok = all(reached.values()) and gap <= 1e-6 and elapsed < 300
    finals = ", ".join(f"{m} {a[-1]:+.3g}" for m, a in traj.items())
    return report("penalty-only amplitude reduction", ok,
                  f"final A: {finals} (need |A| < 0.1); uniform-psi vs psi-first max gap "
                  f"{gap:.2e} (<= 1e-6); {elapsed:.1f} s")


def _returns(cfg, seeds):
    polis = np.array([run_lifelong(cfg.replace(seed=s)).target_return for s in seeds])
    stat = np.array([run_baseline_stationary(cfg.replace(seed=s)).target_return for s in seeds])
    return polis, stat


def vasicek_experiment():
    start = time.perf_counter()
    polis, stat = _returns(RunConfig(env="vasicek", **ENV_DEFAULTS["vasicek"]), range(10))
    pooled = math.sqrt((polis.var(ddof=1) + stat.var(ddof=1)) / 2)
    diff = polis.mean() - stat.mean()
    elapsed = time.perf_counter() - start
    return report("vasicek experiment", diff >= pooled and elapsed < 1800,
                  f"POLIS {polis.mean():.2f} vs stationary {stat.mean():.2f}, difference "
                  f"{diff:.2f} vs pooled std {pooled:.2f}; {elapsed / 60:.1f} min (< 30)")


def dam_experiment():
    start = time.perf_counter()
    parts, ok = [], True
    for profile in (1, 2, 3):
        cfg = RunConfig(env="dam", env_params={"profile": profile}, **ENV_DEFAULTS["dam"])
        polis, stat = _returns(cfg, range(3))
        pooled = math.sqrt((polis.var(ddof=1) + stat.var(ddof=1)) / 2)
        diff = abs(polis.mean() - stat.mean())
        ok &= diff <= pooled
        parts.append(f"profile {profile}: POLIS {polis.mean():.4g} vs stationary "
                     f"{stat.mean():.4g}, |diff| {diff:.3g} vs std {pooled:.3g}")
    elapsed = time.perf_counter() - start
    return report("dam experiment", ok and elapsed < 1800,
                  "; ".join(parts) + f"; {elapsed / 60:.1f} min (< 30)")


def bias_bound_calculator():
    value = bias_bound_tight(1.0, 0.0, 1.0, EstimatorConfig(3, 2, 0.9, 1.0))
    rng = np.random.default_rng(5)
    violations = 0
    for _ in range(1000):
        cfg = EstimatorConfig(int(rng.integers(1, 200)), int(rng.integers(1, 200)),
                              rng.uniform(0.01, 0.999), rng.uniform(0.01, 0.999))
        args = rng.uniform(0, 5, 3)
        violations += bias_bound_tight(*args, cfg) > bias_bound(*args, cfg) * (1 + 1e-12)
    ok = abs(value - 20.9) < 1e-9 and violations == 0
    return report("bias-bound calculator", ok,
                  f"omega=1 example {value:.12g} (20.9); tight > loose in {violations}/1000 draws")


TINY = ["--set", "h=10", "--set", "epochs=3", "--set", "target_length=30",
        "--set", "n_replays=5", "--seeds", "2", "--baseline"]


def _run_twice(argv):
    with tempfile.TemporaryDirectory() as tmp:
        dirs = [Path(tmp) / "a", Path(tmp) / "b"]
        codes = [main(["run", *argv, "--out", str(d)]) for d in dirs]
        files = sorted(p.name for p in dirs[0].glob("*.csv"))
        same = all((dirs[0] / f).read_bytes() == (dirs[1] / f).read_bytes() for f in files)
        return codes, files, same


def determinism():
    results = []
    for argv in (["--env", "vasicek", "--alpha", "40", "--beta", "20", *TINY],
                 ["--env", "dam", "--alpha", "60", "--beta", "10", "--inflow", "3", *TINY],
                 ["--env", "bandit", "--alpha", "30", "--beta", "5", *TINY]):
        results.append(_run_twice(argv))
    n_files = sum(len(f) for _, f, _ in results)
    ok = all(c == [0, 0] and same and files for c, files, same in results)
    return report("determinism", ok,
                  f"{n_files} CSV artifacts from repeated runs compared byte for byte")


def trading_pipeline():
    start = time.perf_counter()
    with tempfile.TemporaryDirectory() as tmp:
        rates = Path(tmp) / "eurusd.csv"
        gen = main(["gen-rates", "--n", "1500", "--seed", "0", "--out", str(rates)])
        run = main(["run", "--env", "trading", "--rates", str(rates), "--out", tmp])
        lines = (Path(tmp) / "trading_polis_seed0.csv").read_text().count("\n")
    elapsed = time.perf_counter() - start
    return report("trading pipeline", gen == 0 and run == 0 and lines == 1001,
                  f"gen-rates exit {gen}, run exit {run}, {lines - 1} step rows; "
                  f"{elapsed:.1f} s")


# -- pytest entry points -----------------------------------------------------------

def test_gradient_correctness():
    assert gradient_correctness()


def test_estimator_unbiasedness():
    assert estimator_unbiasedness()


def test_bound_validity():
    assert bound_validity()


def test_amplitude_reduction():
    assert amplitude_reduction()


@pytest.mark.slow
def test_vasicek_experiment():
    assert vasicek_experiment()


@pytest.mark.slow
def test_dam_experiment():
    assert dam_experiment()


def test_bias_bound_calculator():
    assert bias_bound_calculator()


def test_determinism():
    assert determinism()


def test_trading_pipeline():
    assert trading_pipeline()


if __name__ == "__main__":
    checks = [gradient_correctness, estimator_unbiasedness, bound_validity, amplitude_reduction,
              vasicek_experiment, dam_experiment, bias_bound_calculator, determinism,
              trading_pipeline]
    if "--quick" in sys.argv:
        checks = [c for c in checks if c not in (vasicek_experiment, dam_experiment)]
    results = [c() for c in checks]
    sys.exit(0 if all(results) else 1)
