# %% [markdown]
# # Running experiments from the command line
#
# The `polis` command wraps the harness. Every subcommand writes CSVs with
# a header row and a config-hash column. Exit code 0 means success, 2 a
# configuration error and 3 that some retrain was skipped after a
# degenerate estimate. Here `main` is called with the same argument lists
# a shell would pass.

# %%
import csv
import tempfile
from pathlib import Path

from polis.cli import main

out = Path(tempfile.mkdtemp())


def show(path, n=4):
    with open(path) as fh:
        for i, row in enumerate(csv.reader(fh)):
            if i >= n:
                break
            print(row)


# %% [markdown]
# ## A short run with its baseline
# `--set` overrides any configuration key; the full Vasicek setup is simply
# `polis run --env vasicek --seeds 10 --baseline`.

# %%
code = main(["run", "--env", "vasicek", "--alpha", "60", "--beta", "30", "--set", "h=20",
             "--set", "epochs=10", "--set", "target_length=60", "--set", "n_replays=10",
             "--seeds", "2", "--baseline", "--out", str(out / "run")])
print("exit code", code)
print(sorted(p.name for p in (out / "run").iterdir()))
show(out / "run" / "vasicek_aggregate.csv")

# %% [markdown]
# ## Configuration files
# Plain `key = value` lines; errors name the offending line.

# %%
cfg = out / "dam.cfg"
cfg.write_text("env = dam\nalpha = 80\nbeta = 10\nenv.profile = 2\nepochs = 5\n"
               "target_length = 20\nh = 10\nn_replays = 5\n")
print("exit code", main(["run", "--config", str(cfg), "--out", str(out / "dam")]))
(out / "bad.cfg").write_text("alpha = 80\nalpah = 3\n")
print("exit code", main(["run", "--config", str(out / "bad.cfg")]))

# %% [markdown]
# ## Grid sweep
# One row per lambda, beta and seed.

# %%
main(["sweep", "--env", "bandit", "--alpha", "40", "--set", "h=10", "--set", "epochs=5",
      "--set", "target_length=20", "--set", "n_replays=5", "--lambdas", "0.1,1",
      "--betas", "5,10", "--seeds", "2", "--out", str(out / "sweep")])
show(out / "sweep" / "bandit_sweep.csv", n=9)

# %% [markdown]
# ## Bound benchmark and bias calculator

# %%
main(["bounds-bench", "--n", "20", "--steps", "200", "--out", str(out / "bench")])
main(["bias-bound", "--gamma", "0.9", "--alpha", "3", "--beta", "2"])

# %% [markdown]
# ## Trading on a synthetic rates file

# %%
rates = out / "rates.csv"
main(["gen-rates", "--n", "200", "--out", str(rates)])
print("exit code", main(["run", "--env", "trading", "--rates", str(rates), "--alpha", "60",
                         "--beta", "20", "--set", "h=20", "--set", "epochs=5",
                         "--set", "target_length=60", "--set", "n_replays=5",
                         "--out", str(out / "trading")]))
