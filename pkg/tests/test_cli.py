import csv
import json

import numpy as np
import pytest

import polis.harness as harness
from polis.cli import ENV_DEFAULTS, build_parser, build_config, main, read_config
from polis.errors import ConfigurationError, DegenerateEstimateError
from polis.harness import RunConfig, run_lifelong

TINY = ["--env", "bandit", "--alpha", "20", "--beta", "5", "--set", "h=5", "--set", "epochs=2",
        "--set", "target_length=10", "--set", "n_replays=3"]


def read_rows(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


def csv_files(directory):
    return sorted(p for p in directory.iterdir() if p.suffix == ".csv")


class TestRun:
    def test_artifacts(self, tmp_path, capsys):
        code = main(["run", *TINY, "--seed", "0", "1", "--baseline", "--out", str(tmp_path)])
        assert code == 0
        names = {p.name for p in tmp_path.iterdir()}
        for label in ("polis", "stationary"):
            for s in (0, 1):
                assert f"bandit_{label}_seed{s}.csv" in names
                assert f"bandit_{label}_seed{s}.json" in names
            assert f"bandit_{label}_diagnostics.csv" in names
        agg = read_rows(tmp_path / "bandit_aggregate.csv")
        assert agg[0][:3] == ["config_hash", "env", "method"]
        assert [r[2] for r in agg[1:]] == ["polis", "stationary"]
        assert "polis: mean return" in capsys.readouterr().out

    def test_every_csv_has_header_and_hash(self, tmp_path):
        main(["run", *TINY, "--seeds", "2", "--out", str(tmp_path)])
        for path in csv_files(tmp_path):
            rows = read_rows(path)
            assert rows[0][0] == "config_hash" and len(rows) > 1
            assert all(len(r[0]) == 12 for r in rows[1:])

    def test_rerun_is_byte_identical(self, tmp_path):
        a, b = tmp_path / "a", tmp_path / "b"
        for out in (a, b):
            assert main(["run", *TINY, "--seeds", "2", "--baseline", "--out", str(out)]) == 0
        files = csv_files(a)
        assert [p.name for p in files] == [p.name for p in csv_files(b)]
        for p in files:
            assert p.read_bytes() == (b / p.name).read_bytes()

    def test_worker_pool_matches_serial(self, tmp_path):
        main(["run", *TINY, "--seeds", "2", "--out", str(tmp_path / "s")])
        main(["run", *TINY, "--seeds", "2", "--workers", "2", "--out", str(tmp_path / "p")])
        for p in csv_files(tmp_path / "s"):
            assert p.read_bytes() == (tmp_path / "p" / p.name).read_bytes()

    def test_sidecar_records_config(self, tmp_path):
        main(["run", *TINY, "--seed", "4", "--out", str(tmp_path)])
        meta = json.loads((tmp_path / "bandit_polis_seed4.json").read_text())
        assert meta["config"]["seed"] == 4 and meta["config"]["alpha"] == 20
        assert meta["config_hash"] == RunConfig(**meta["config"]).config_hash()

    def test_output_root_from_environment(self, tmp_path, monkeypatch):
        monkeypatch.setenv("POLIS_OUTPUT_ROOT", str(tmp_path / "root"))
        assert main(["run", *TINY]) == 0
        assert (tmp_path / "root" / "bandit_polis_seed0.csv").exists()

    def test_degenerate_retrain_exit_code(self, tmp_path, monkeypatch):
        def broken(*args, **kw):
            raise DegenerateEstimateError(3, -900.0)
        monkeypatch.setattr(harness, "train", broken)
        assert main(["run", *TINY, "--out", str(tmp_path)]) == 3
        meta = json.loads((tmp_path / "bandit_polis_seed0.json").read_text())
        assert len(meta["skipped_retrains"]) == 2

    def test_empty_seed_list(self, tmp_path, capsys):
        assert main(["run", *TINY, "--seed", "--out", str(tmp_path)]) == 2
        assert "seed list is empty" in capsys.readouterr().err

    def test_trading_needs_rates(self, tmp_path):
        assert main(["run", "--env", "trading", "--out", str(tmp_path)]) == 2

    def test_gen_rates_then_trading(self, tmp_path):
        rates = tmp_path / "rates.csv"
        assert main(["gen-rates", "--n", "80", "--seed", "1", "--out", str(rates)]) == 0
        code = main(["run", "--env", "trading", "--rates", str(rates), "--alpha", "30",
                     "--beta", "10", "--set", "h=10", "--set", "epochs=2",
                     "--set", "target_length=30", "--set", "n_replays=3", "--baseline",
                     "--out", str(tmp_path / "out")])
        assert code == 0
        rows = read_rows(tmp_path / "out" / "trading_polis_seed0.csv")
        assert len(rows) == 1 + 60

    def test_short_rates_file_rejected(self, tmp_path):
        rates = tmp_path / "rates.csv"
        main(["gen-rates", "--n", "20", "--out", str(rates)])
        assert main(["run", "--env", "trading", "--rates", str(rates), "--alpha", "30",
                     "--out", str(tmp_path)]) == 2


class TestConfigFile:
    def write(self, tmp_path, text):
        path = tmp_path / "run.cfg"
        path.write_text(text)
        return path

    def test_parse(self, tmp_path):
        path = self.write(tmp_path, "# dam run\nenv = dam\nalpha = 40  # short\n\n"
                                    "env.profile = 2\narch.channels = 4,4\nlearn_sigma = no\n")
        s = read_config(path)
        assert s == {"env": "dam", "alpha": 40, "env_params": {"profile": 2},
                     "arch_params": {"channels": (4, 4)}, "learn_sigma": False}

    @pytest.mark.parametrize("text,line,fragment", [
        ("alpha = 10\nbogus = 3\n", 2, "unknown key"),
        ("alpha = 10\n\nbeta = many\n", 3, "bad value"),
        ("learn_sigma = maybe\n", 1, "bad value"),
        ("alpha 10\n", 1, "expected"),
        ("env_params = 1\n", 1, "unknown key"),
    ])
    def test_errors_name_the_line(self, tmp_path, capsys, text, line, fragment):
        path = self.write(tmp_path, text)
        assert main(["run", "--config", str(path), "--out", str(tmp_path)]) == 2
        err = capsys.readouterr().err
        assert f"{path}:{line}:" in err and fragment in err

    def test_defaults_follow_environment(self):
        args = build_parser().parse_args(["run", "--env", "dam"])
        cfg = build_config(args)
        for key, value in ENV_DEFAULTS["dam"].items():
            assert getattr(cfg, key) == value
        assert (cfg.h, cfg.epochs, cfg.target_length) == (50, 100, 500)

    def test_flags_override_file(self, tmp_path):
        path = self.write(tmp_path, "env = vasicek\nalpha = 40\nlam = 3\n")
        args = build_parser().parse_args(["run", "--config", str(path), "--alpha", "60",
                                          "--lambda", "7", "--omega", "0.9", "--gamma", "0.95",
                                          "--beta", "9"])
        cfg = build_config(args)
        assert (cfg.alpha, cfg.lam, cfg.omega, cfg.gamma, cfg.beta) == (60, 7.0, 0.9, 0.95, 9)

    def test_invalid_value_exit_code(self, tmp_path):
        assert main(["run", *TINY, "--gamma", "1.5", "--out", str(tmp_path)]) == 2
        assert main(["run", *TINY, "--set", "h=0", "--out", str(tmp_path)]) == 2
        assert main(["run", *TINY, "--set", "nope=1", "--out", str(tmp_path)]) == 2


class TestSweep:
    def test_row_count(self, tmp_path):
        code = main(["sweep", *TINY, "--lambdas", "0,1,10", "--betas", "3,5", "--seeds", "2",
                     "--out", str(tmp_path)])
        assert code == 0
        rows = read_rows(tmp_path / "bandit_sweep.csv")
        assert rows[0] == ["config_hash", "lam", "beta", "seed", "return", "reward_std"]
        assert len(rows) - 1 == 3 * 2 * 2
        assert len({r[0] for r in rows[1:]}) == 12

    def test_beta_one_rejected(self, tmp_path):
        assert main(["sweep", *TINY, "--betas", "1,5", "--out", str(tmp_path)]) == 2

    def test_empty_grid_rejected(self, tmp_path):
        assert main(["sweep", *TINY, "--lambdas", ",", "--out", str(tmp_path)]) == 2

    def test_single_cell_equals_run(self, tmp_path):
        main(["sweep", *TINY, "--seed", "3", "--out", str(tmp_path)])
        row = read_rows(tmp_path / "bandit_sweep.csv")[1]
        args = build_parser().parse_args(["run", *TINY])
        rec = run_lifelong(build_config(args).replace(seed=3))
        rewards = np.array([r["reward"] for r in rec.target_steps])
        assert row[0] == rec.config.config_hash()
        assert float(row[4]) == float(rewards.sum())


class TestBoundsBench:
    def test_bench_rows_dominate_oracle(self, tmp_path, capsys):
        assert main(["bounds-bench", "--n", "4", "--seed", "2", "--steps", "0",
                     "--out", str(tmp_path)]) == 0
        rows = read_rows(tmp_path / "bounds_bench.csv")[1:]
        assert len(rows) == 4 * 7
        for r in rows:
            assert float(r[4]) >= float(r[5]) * (1 - 1e-6)
        out = capsys.readouterr().out
        assert "mean log(bound/oracle)" in out and "uniform_psi" in out

    def test_trajectory(self, tmp_path, capsys):
        assert main(["bounds-bench", "--n", "1", "--steps", "20", "--out", str(tmp_path)]) == 0
        rows = read_rows(tmp_path / "bounds_trajectory.csv")
        assert rows[0] == ["method", "step", "A", "log_bound"]
        assert "final A [direct_reset]" in capsys.readouterr().out

    def test_needs_an_instance(self, tmp_path):
        assert main(["bounds-bench", "--n", "0", "--out", str(tmp_path)]) == 2


class TestBiasBound:
    def test_omega_one_example(self, capsys):
        assert main(["bias-bound", "--gamma", "0.9", "--alpha", "3", "--beta", "2"]) == 0
        out = capsys.readouterr().out
        assert "omega = 1" in out and "tight bound: 20.9" in out

    def test_both_branches_below_one(self, capsys):
        assert main(["bias-bound", "--gamma", "0.9", "--omega", "0.8", "--alpha", "3",
                     "--beta", "2"]) == 0
        out = capsys.readouterr().out
        loose = float(out.split("loose bound:")[1].split()[0])
        tight = float(out.split("tight bound:")[1].split()[0])
        assert tight <= loose

    def test_undefined_branch(self, capsys):
        assert main(["bias-bound", "--gamma", "1.0", "--alpha", "3", "--beta", "2"]) == 2
        assert "error:" in capsys.readouterr().err

    def test_negative_lipschitz(self):
        assert main(["bias-bound", "--gamma", "0.9", "--alpha", "3", "--beta", "2",
                     "--lm", "-1"]) == 2


def test_configuration_error_is_distinct_from_degenerate():
    assert not issubclass(ConfigurationError, DegenerateEstimateError)
