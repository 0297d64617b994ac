import csv

import numpy as np
import pytest

from yfree import cli
from yfree.data import make_rng

FAST_NN = ["--set", "epochs=5", "--set", "width=4", "--set", "n_trees=5", "--n-val", "50"]


def read(path):
    with open(path, newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(fh))


def run(*argv):
    assert cli.main([str(a) for a in argv]) == 0


class TestConfig:
    def test_file_then_set_then_flag(self, tmp_path):
        cfg_file = tmp_path / "c.txt"
        cfg_file.write_text("seed = 3  # comment\nreps=4\nn_train=50\n")
        args = cli.make_parser().parse_args(["select", "--config", str(cfg_file), "--set", "reps=2", "--seed", "9"])
        cfg = cli.build_config(args)
        assert cfg["seed"] == "9" and cfg.int("reps") == 2 and cfg.int("n_train") == 50

    def test_unknown_key(self, tmp_path):
        (tmp_path / "c.txt").write_text("colour=red\n")
        with pytest.raises(ValueError, match="unknown key"):
            cli.read_config(tmp_path / "c.txt")

    def test_reps_positive(self):
        with pytest.raises(ValueError):
            cli.build_config(cli.make_parser().parse_args(["select", "--reps", "0"]))

    def test_error_exit_code(self, tmp_path, capsys):
        code = cli.main(["select", "--out", str(tmp_path), "--set", "synth_rows=10", "--reps", "1"])
        assert code == 2
        assert "error" in capsys.readouterr().err


class TestDemoSin:
    def test_outputs(self, tmp_path):
        run("demo-sin", "--out", tmp_path, *FAST_NN)
        curves = sorted(p.name for p in (tmp_path / "curves").iterdir())
        assert len(curves) == 10
        assert {c.split("_")[0] for c in curves} == {"spline", "krr", "knn", "rf", "nn"}
        rows = read(tmp_path / "curves" / "krr_y_free.csv")
        assert len(rows) == 1000 and list(rows[0]) == ["x", "f_hat"]
        assert len(read(tmp_path / "summary.csv")) == 10
        assert len(read(tmp_path / "nn_y_free_log.csv")) == 6

    def test_deterministic(self, tmp_path):
        run("demo-sin", "--out", tmp_path / "a", *FAST_NN)
        run("demo-sin", "--out", tmp_path / "b", *FAST_NN)
        for p in (tmp_path / "a").rglob("*.csv"):
            assert p.read_bytes() == (tmp_path / "b" / p.relative_to(tmp_path / "a")).read_bytes()

    def test_noiseless_krr(self, tmp_path):
        run("demo-sin", "--out", tmp_path, "--set", "noise_sd=0", *FAST_NN)
        r2 = {(r["model"], r["method"]): float(r["r2"]) for r in read(tmp_path / "summary.csv")}
        assert r2[("krr", "y_free")] >= 0.99


class TestComplexity:
    def test_three_settings(self, tmp_path):
        run("complexity-demo", "--out", tmp_path)
        rows = read(tmp_path / "complexity.csv")
        assert [float(r["sigma"]) for r in rows] == [1.3, 0.16, 0.01]
        for s in ("1.3", "0.16", "0.01"):
            assert len(read(tmp_path / f"krr_sigma_{s}.csv")) == 1000
        # sigma = 0.01 has a well-conditioned Gram matrix and interpolates
        assert float(rows[2]["max_residual"]) < 1e-6
        assert float(rows[2]["edof"]) == pytest.approx(10.0, abs=1e-6)


def write_linear_csv(path, n=80, d=4, seed=0, garbage=False):
    rng = make_rng(seed)
    X = rng.standard_normal((n, d))
    y = X @ np.arange(1.0, d + 1) + rng.standard_normal(n)
    if garbage:
        y = make_rng(seed + 99).standard_cauchy(n) * 1e3
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(",".join([f"x{j}" for j in range(d)] + ["y"]) + "\n")
        for row, t in zip(X, y):
            fh.write(",".join(repr(float(v)) for v in [*row, t]) + "\n")


class TestSelect:
    common = ["--n-train", "50", "--n-test", "20", "--n-val", "60"]

    def test_table(self, tmp_path):
        run("select", "--out", tmp_path, "--reps", "2", *self.common)
        rows = read(tmp_path / "table.csv")
        assert list(rows[0]) == ["data", "model", "method", "q1", "q2", "q3"]
        assert [r["method"] for r in rows] == ["msv", "gcv", "cv"]
        assert len(read(tmp_path / "repetitions.csv")) == 6

    def test_single_rep_quartiles_equal(self, tmp_path):
        run("select", "--out", tmp_path, "--reps", "1", "--criterion", "msv_tr", *self.common)
        (row,) = read(tmp_path / "table.csv")
        assert row["q1"] == row["q2"] == row["q3"]

    def test_gcv_random_guessing(self, tmp_path):
        run("select", "--out", tmp_path, "--reps", "3", "--criterion", "gcv", *self.common)
        (row,) = read(tmp_path / "table.csv")
        assert abs(float(row["q2"])) < 0.1

    def test_csv_and_knn(self, tmp_path):
        write_linear_csv(tmp_path / "d.csv")
        run("select", "--out", tmp_path / "o", "--data", tmp_path / "d.csv", "--target", "y", "--model", "knn",
            "--reps", "1", "--criterion", "msv", "--criterion", "cv", *self.common)
        rows = read(tmp_path / "o" / "table.csv")
        assert rows[0]["data"] == "d" and rows[0]["model"] == "knn"

    def test_random_forest(self, tmp_path):
        run("select", "--out", tmp_path, "--model", "rf", "--reps", "1", "--set", "n_trees=5", *self.common)
        assert [r["method"] for r in read(tmp_path / "table.csv")] == ["y", "y_free"]

    def test_classification(self, tmp_path):
        rng = make_rng(1)
        with open(tmp_path / "c.csv", "w", encoding="utf-8") as fh:
            fh.write("a,b,label\n")
            for _ in range(80):
                lab = int(rng.integers(0, 3))
                fh.write(f"{rng.normal(3 * lab)},{rng.normal()},{lab}\n")
        run("select", "--out", tmp_path / "o", "--data", tmp_path / "c.csv", "--target", "label",
            "--classification", "--model", "knn", "--reps", "1", "--criterion", "cv", *self.common)
        (row,) = read(tmp_path / "o" / "table.csv")
        assert 0.0 <= float(row["q2"]) <= 1.0

    def test_garbage_response_same_selection(self, tmp_path):
        write_linear_csv(tmp_path / "good.csv")
        write_linear_csv(tmp_path / "bad.csv", garbage=True)
        chosen = []
        for name in ("good", "bad"):
            run("select", "--out", tmp_path / name, "--data", tmp_path / f"{name}.csv", "--target", "y",
                "--reps", "2", "--criterion", "msv", "--criterion", "msv_tr", "--criterion", "gcv", *self.common)
            chosen.append([(r["method"], r["chosen"]) for r in read(tmp_path / name / "repetitions.csv")])
        assert chosen[0] == chosen[1]

    def test_deterministic(self, tmp_path):
        for name in ("a", "b"):
            run("select", "--out", tmp_path / name, "--reps", "2", "--criterion", "msv", *self.common)
        assert (tmp_path / "a" / "repetitions.csv").read_bytes() == (tmp_path / "b" / "repetitions.csv").read_bytes()


class TestAsymptotics:
    def test_small_scan(self, tmp_path):
        run("asymptotics", "--out", tmp_path, "--set", "gamma_step=0.05", "--set", "snr_step=10",
            "--set", "panel_gamma_step=0.5")
        (summary,) = read(tmp_path / "summary.csv")
        assert float(summary["max_ratio"]) < 2.449
        assert list(read(tmp_path / "ratio_scan.csv")[0])[:2] == ["gamma", "snr"]
        panel = read(tmp_path / "risk_curves.csv")
        assert {r["snr"] for r in panel} == {"1.0", "5.0", "20.0"}
        for r in panel:
            g = float(r["gamma"])
            if g <= 0.5 or g >= 2:
                assert r["r_T"] == r["r_zero"]


class TestBenchNTK:
    def test_runs(self, tmp_path, capsys):
        run("bench-ntk", "--out", tmp_path, "--n-train", "20", "--n-test", "10", "--n-val", "15",
            "--set", "epochs=6", "--set", "width=4", "--set", "build=both")
        assert "flops" in capsys.readouterr().out
        rows = read(tmp_path / "results.csv")
        assert [r["run"] for r in rows] == ["random_msv", "random_gcv", "zero_msv", "zero_gcv", "standard"]
        assert len(read(tmp_path / "log_random_msv.csv")) == 7
        for r in rows:
            assert 0.0 <= float(r["score"]) <= 1.0

    def test_regression(self, tmp_path):
        run("bench-ntk", "--out", tmp_path, "--n-train", "15", "--n-test", "10", "--n-val", "10",
            "--set", "epochs=3", "--set", "width=3", "--set", "task=regression")
        assert len(read(tmp_path / "results.csv")) == 3
