"""Command-line entry point: ``polis <subcommand> [options]``.

Exit codes: 0 on success, 2 for configuration errors, 3 when an estimate
degenerates at run time.
"""
import argparse
import concurrent.futures
import dataclasses
import logging
import math
import os
import sys
import time
from pathlib import Path

import numpy as np

from .divergence_bounds import (METHODS, all_bounds, bound_by_method, mixture_renyi_quadrature,
                                random_instance)
from .environments import synthetic_rates, write_rates_csv
from .errors import ConfigurationError, ConstraintError, DegenerateEstimateError, DomainError
from .estimation import EstimatorConfig, bias_bound, bias_bound_tight
from .harness import (BoundComparisonConfig, RunConfig, run_bound_comparison, run_lifelong,
                      stationary_variant, write_csv)

EXIT_OK, EXIT_CONFIG, EXIT_DEGENERATE = 0, 2, 3

ENV_DEFAULTS = {
    "vasicek": {"alpha": 500, "beta": 500, "lam": 10.0, "learn_sigma": False},
    "trading": {"alpha": 500, "beta": 500, "lam": 10.0, "learn_sigma": False},
    "dam": {"alpha": 1000, "beta": 50, "lam": 100.0, "learn_sigma": True,
            "credit": "to_go"},
    "bandit": {"alpha": 100, "beta": 50, "lam": 1.0, "learn_sigma": False},
}

FIELDS = {f.name: f for f in dataclasses.fields(RunConfig)}
_CASTS = {"int": int, "float": float, "str": str, "bool": None}


def _parse_scalar(text):
    low = text.strip().lower()
    if low in ("true", "yes", "on"):
        return True
    if low in ("false", "no", "off"):
        return False
    for cast in (int, float):
        try:
            return cast(text)
        except ValueError:
            pass
    return text.strip()


def _coerce(key, value):
    """Convert a string to the type of the RunConfig field ``key``."""
    kind = FIELDS[key].type if isinstance(FIELDS[key].type, str) else FIELDS[key].type.__name__
    if kind == "bool":
        v = _parse_scalar(value)
        if not isinstance(v, bool):
            raise ValueError(f"expected true/false, got {value!r}")
        return v
    if kind in ("int", "float"):
        return _CASTS[kind](value)
    return value.strip()


def apply_setting(settings, key, value):
    """Store one ``key = value`` pair; ``env.*`` and ``arch.*`` are nested."""
    if key.startswith(("env.", "arch.")):
        group, sub = key.split(".", 1)
        v = _parse_scalar(value)
        if group == "arch" and isinstance(v, str) and "," in v:
            v = tuple(int(x) for x in v.split(","))
        settings.setdefault(f"{group}_params", {})[sub] = v
        return
    if key not in FIELDS or key in ("env_params", "arch_params"):
        raise KeyError(key)
    settings[key] = _coerce(key, value)


def read_config(path):
    """Parse a ``key = value`` file; ``#`` starts a comment."""
    settings = {}
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigurationError(f"{path}:{lineno}: expected 'key = value'")
            key, value = (part.strip() for part in line.split("=", 1))
            try:
                apply_setting(settings, key, value)
            except KeyError:
                raise ConfigurationError(f"{path}:{lineno}: unknown key {key!r}") from None
            except ValueError as err:
                raise ConfigurationError(f"{path}:{lineno}: bad value for {key!r}: {err}") from None
    return settings


def build_config(args):
    settings = read_config(args.config) if args.config else {}
    env = args.env or settings.get("env", "vasicek")
    if env not in ENV_DEFAULTS:
        raise ConfigurationError(f"unknown environment {env!r}")
    merged = dict(ENV_DEFAULTS[env], env=env)
    merged.update(settings)
    merged["env_params"] = dict(settings.get("env_params", {}))
    for flag, key in (("alpha", "alpha"), ("beta", "beta"), ("gamma", "gamma"),
                      ("omega", "omega"), ("lam", "lam")):
        value = getattr(args, flag, None)
        if value is not None:
            merged[key] = value
    if getattr(args, "inflow", None) is not None:
        merged["env_params"]["profile"] = args.inflow
    if getattr(args, "rates", None):
        merged["env_params"]["rates_csv"] = args.rates
    for item in getattr(args, "set", None) or []:
        if "=" not in item:
            raise ConfigurationError(f"--set expects key=value, got {item!r}")
        key, value = item.split("=", 1)
        try:
            apply_setting(merged, key.strip(), value)
        except KeyError:
            raise ConfigurationError(f"--set: unknown key {key.strip()!r}") from None
        except ValueError as err:
            raise ConfigurationError(f"--set: bad value for {key!r}: {err}") from None
    if env == "trading" and "rates_csv" not in merged["env_params"]:
        raise ConfigurationError("the trading environment needs --rates or env.rates_csv")
    merged.pop("seed", None)
    return RunConfig(**merged)


def seed_list(args):
    if args.seed is not None:
        seeds = list(args.seed)
    else:
        seeds = list(range(args.seeds))
    if not seeds:
        raise ConfigurationError("seed list is empty")
    return seeds


def output_dir(args):
    root = args.out or os.environ.get("POLIS_OUTPUT_ROOT", "polis_runs")
    path = Path(root)
    path.mkdir(parents=True, exist_ok=True)
    return path


def _run_one(cfg):
    return run_lifelong(cfg)


def run_many(configs, workers):
    if workers <= 1:
        return [_run_one(c) for c in configs]
    with concurrent.futures.ProcessPoolExecutor(workers) as pool:
        return list(pool.map(_run_one, configs))


def _target_rewards(rec):
    return np.array([r["reward"] for r in rec.target_steps])


def write_records(records, out, label):
    """Per-seed step and diagnostics CSVs plus JSON sidecars."""
    diag_rows, diag_header = [], None
    for rec in records:
        stem = out / f"{label}_seed{rec.config.seed}"
        rec.to_csv(f"{stem}.csv")
        rec.write_sidecar(f"{stem}.json")
        diag_header, rows = rec.diagnostic_rows()
        diag_rows.extend(rows)
    if diag_header:
        write_csv(out / f"{label}_diagnostics.csv", diag_header, diag_rows)


def cmd_run(args):
    base = build_config(args)
    seeds = seed_list(args)
    out = output_dir(args)
    variants = [("polis", base)]
    if args.baseline:
        variants.append(("stationary", stationary_variant(base)))
    agg, any_skipped = [], False
    for label, cfg in variants:
        records = run_many([cfg.replace(seed=s) for s in seeds], args.workers)
        write_records(records, out, f"{cfg.env}_{label}")
        returns = np.array([r.target_return for r in records])
        skipped = sum(len(r.skipped) for r in records)
        agg.append([cfg.config_hash(), cfg.env, label, len(seeds), repr(float(returns.mean())),
                    repr(float(returns.std(ddof=1))) if len(seeds) > 1 else "nan", skipped])
        print(f"{label}: mean return {returns.mean():.6g} over {len(seeds)} seeds"
              + (f" (std {returns.std(ddof=1):.4g})" if len(seeds) > 1 else ""))
        if skipped:
            any_skipped = True
            print(f"{label}: {skipped} retrains skipped after degenerate estimates")
    write_csv(out / f"{base.env}_aggregate.csv",
              ["config_hash", "env", "method", "n_seeds", "mean_return", "std_return",
               "skipped_retrains"], agg)
    return EXIT_DEGENERATE if any_skipped else EXIT_OK


def _float_list(text):
    return [float(x) for x in text.split(",") if x.strip()]


def cmd_sweep(args):
    base = build_config(args)
    seeds = seed_list(args)
    lams = _float_list(args.lambdas) if args.lambdas else [base.lam]
    betas = [int(b) for b in _float_list(args.betas)] if args.betas else [base.beta]
    if not lams or not betas:
        raise ConfigurationError("sweep grid is empty")
    if any(b == 1 for b in betas):
        raise ConfigurationError("beta = 1 is excluded from sweeps")
    out = output_dir(args)
    cells = [(lam, beta) for lam in lams for beta in betas]
    configs = [base.replace(lam=lam, beta=beta, seed=s) for lam, beta in cells for s in seeds]
    records = run_many(configs, args.workers)
    rows = []
    for rec in records:
        c = rec.config
        rewards = _target_rewards(rec)
        rows.append([c.config_hash(), repr(c.lam), c.beta, c.seed, repr(float(rewards.sum())),
                     repr(float(rewards.std()))])
    write_csv(out / f"{base.env}_sweep.csv",
              ["config_hash", "lam", "beta", "seed", "return", "reward_std"], rows)
    print(f"wrote {len(rows)} rows to {out / f'{base.env}_sweep.csv'}")
    return EXIT_OK


def cmd_bounds_bench(args):
    if args.n < 1:
        raise ConfigurationError("need at least one instance")
    rng = np.random.default_rng(args.seed)
    out = output_dir(args)
    rows, log_slack = [], {m: [] for m in METHODS}
    for i in range(args.n):
        spec = random_instance(rng)
        start = time.perf_counter()
        oracle = mixture_renyi_quadrature(spec)
        rows.append([i, spec.L, spec.K, "quadrature", repr(oracle), repr(oracle),
                     f"{time.perf_counter() - start:.6f}"])
        for m in METHODS:
            start = time.perf_counter()
            value = bound_by_method(spec, m) if m != "direct_no_reset" else all_bounds(spec)[m]
            rows.append([i, spec.L, spec.K, m, repr(value), repr(oracle),
                         f"{time.perf_counter() - start:.6f}"])
            log_slack[m].append(math.log(value) - math.log(oracle))
    write_csv(out / "bounds_bench.csv",
              ["instance", "L", "K", "method", "bound", "oracle", "seconds"], rows)
    print("method            mean log(bound/oracle)   min bound/oracle - 1")
    for m in sorted(METHODS, key=lambda m: np.mean(log_slack[m])):
        s = np.array(log_slack[m])
        print(f"{m:<17} {s.mean():>22.4f} {np.expm1(s.min()):>21.3e}")
    if args.steps > 0:
        traj = run_bound_comparison(BoundComparisonConfig(steps=args.steps))
        write_csv(out / "bounds_trajectory.csv", ["method", "step", "A", "log_bound"],
                  [[r["method"], r["step"], repr(r["A"]), repr(r["log_bound"])] for r in traj])
        final = {r["method"]: r["A"] for r in traj}
        for m in METHODS:
            print(f"final A [{m}]: {final[m]:.4g}")
    return EXIT_OK


def cmd_bias_bound(args):
    cfg = EstimatorConfig(args.alpha, args.beta, args.gamma, args.omega)
    tight = bias_bound_tight(args.lm, args.lnu, args.r, cfg)
    if args.omega < 1.0:
        loose = bias_bound(args.lm, args.lnu, args.r, cfg)
        print(f"branch: omega < 1\nloose bound: {loose:.6g}\ntight bound: {tight:.6g}")
    else:
        print(f"branch: omega = 1 (only the tight bound applies)\ntight bound: {tight:.6g}")
    return EXIT_OK


def cmd_gen_rates(args):
    dates, rates = synthetic_rates(args.n, args.seed)
    write_rates_csv(args.out, dates, rates)
    print(f"wrote {args.n} synthetic rates to {args.out}")
    return EXIT_OK


def _add_run_options(p):
    p.add_argument("--config", help="key = value configuration file")
    p.add_argument("--env", choices=sorted(ENV_DEFAULTS))
    p.add_argument("--inflow", type=int, choices=(1, 2, 3), help="dam inflow profile")
    p.add_argument("--rates", help="rates CSV for the trading environment")
    p.add_argument("--alpha", type=int)
    p.add_argument("--beta", type=int)
    p.add_argument("--gamma", type=float)
    p.add_argument("--omega", type=float)
    p.add_argument("--lambda", dest="lam", type=float)
    p.add_argument("--set", action="append", metavar="KEY=VALUE",
                   help="override any configuration key")
    p.add_argument("--seeds", type=int, default=1, help="run seeds 0..N-1")
    p.add_argument("--seed", type=int, nargs="*", help="explicit seed list")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--out", help="output directory (default $POLIS_OUTPUT_ROOT)")


def build_parser():
    parser = argparse.ArgumentParser(prog="polis")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="lifelong run over one or more seeds")
    _add_run_options(p)
    p.add_argument("--baseline", action="store_true", help="also run the stationary baseline")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("sweep", help="grid over lambda and beta")
    _add_run_options(p)
    p.add_argument("--lambdas", help="comma-separated lambda values")
    p.add_argument("--betas", help="comma-separated beta values")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("bounds-bench", help="compare divergence bounds with quadrature")
    p.add_argument("--n", type=int, default=200)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--steps", type=int, default=2000,
                   help="penalty-only steps for the amplitude experiment (0 skips it)")
    p.add_argument("--out")
    p.set_defaults(func=cmd_bounds_bench)

    p = sub.add_parser("bias-bound", help="evaluate the estimator bias bounds")
    p.add_argument("--gamma", type=float, required=True)
    p.add_argument("--omega", type=float, default=1.0)
    p.add_argument("--alpha", type=int, required=True)
    p.add_argument("--beta", type=int, required=True)
    p.add_argument("--lm", type=float, default=1.0, help="Lipschitz constant of the mean reward")
    p.add_argument("--lnu", type=float, default=0.0, help="Lipschitz constant of the hyper-policy")
    p.add_argument("--r", type=float, default=1.0, help="reward bound")
    p.set_defaults(func=cmd_bias_bound)

    p = sub.add_parser("gen-rates", help="write a synthetic rates CSV")
    p.add_argument("--n", type=int, default=1500)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_gen_rates)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.ERROR,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ConfigurationError, DomainError, ConstraintError) as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_CONFIG
    except DegenerateEstimateError as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_DEGENERATE


if __name__ == "__main__":
    sys.exit(main())
