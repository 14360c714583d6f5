import csv
from pathlib import Path

import pytest

from laser_vfl.cli import main
from laser_vfl.config import RunConfig, load_config, parse_config
from laser_vfl.data import save_csv, synth_classification
from laser_vfl.errors import ConfigError
from laser_vfl.runner import aggregate, run_grid, threads_from_env

TINY = """
[dataset]
n_train = 60
n_test = 30
K = 3
widths = 2
n_classes = 2
[experiment]
methods = {methods}
p_miss_train = 0.0, 0.5
p_miss_test = 0.0, 0.5, beta
seeds = 1, 2
epochs = 1
batch_size = 16
[model]
d_rep = 3
hidden = 4
[output]
out_dir = out
"""


def write(tmp_path, text, name="c.ini"):
    p = tmp_path / name
    p.write_text(text)
    return p


def rows(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


class TestConfig:
    def test_defaults_validate(self):
        cfg, findings = parse_config(Path(__file__).parents[1] / "configs" / "default.ini")
        assert findings == []
        assert cfg == RunConfig(base_dir=cfg.base_dir)

    def test_parse_lists(self, tmp_path):
        cfg = load_config(write(tmp_path, TINY.format(methods="laser, local")))
        assert cfg.methods == ("laser", "local")
        assert cfg.p_miss_test == (0.0, 0.5, "beta")
        assert cfg.hidden == (4,) and cfg.block_widths() == (2, 2, 2)

    @pytest.mark.parametrize(
        "extra,needle",
        [
            ("[experiment]\nmethods = laser, magic\n", "unknown method"),
            ("[experiment]\np_miss_train = 1.5\n", "outside [0, 1]"),
            ("[experiment]\nlr = -1\n", "lr"),
            ("[experiment]\nbogus = 3\n", "unknown field"),
            ("[dataset]\nK = three\n", "cannot parse"),
            ("[dataset]\nsource = csv\n", "train_path"),
            ("[dataset]\nsource = csv\ntrain_path = nope.csv\n", "does not exist"),
        ],
    )
    def test_findings(self, tmp_path, extra, needle):
        _, findings = parse_config(write(tmp_path, extra))
        assert any(needle in f for f in findings), findings
        with pytest.raises(ConfigError):
            load_config(tmp_path / "c.ini")

    def test_missing_file(self, tmp_path):
        _, findings = parse_config(tmp_path / "none.ini")
        assert findings

    def test_digest_ignores_output(self):
        assert RunConfig(out_dir="a").digest() == RunConfig(out_dir="b").digest()
        assert RunConfig(lr=0.2).digest() != RunConfig().digest()


class TestRunner:
    def test_grid_counts(self, tmp_path):
        cfg = load_config(write(tmp_path, TINY.format(methods="laser, standard")))
        summary = run_grid(cfg, threads=0)
        assert summary.exit_code == 0
        res = rows(summary.out_dir / "results.csv")
        assert len(res) == 2 * 2 * 3 * 2 == summary.n_rows
        agg = rows(summary.out_dir / "aggregate.csv")
        assert len(agg) == 2 * 2 * 3 and all(r["n_seeds"] == "2" for r in agg)
        assert len(list((summary.out_dir / "traces").glob("*.csv"))) == 2 * 2 * 2
        assert (summary.out_dir / "failures.txt").read_text() == ""
        assert summary.out_dir.name == f"run-{cfg.digest()}"

    def test_single_cell(self, tmp_path):
        text = TINY.format(methods="local").replace("0.0, 0.5, beta", "0.0").replace("0.0, 0.5", "0.0")
        text = text.replace("seeds = 1, 2", "seeds = 1")
        summary = run_grid(load_config(write(tmp_path, text)), threads=0)
        assert summary.n_rows == 1
        assert len(list((summary.out_dir / "traces").glob("*.csv"))) == 1

    def test_aggregate_recomputes(self, tmp_path):
        import statistics

        cfg = load_config(write(tmp_path, TINY.format(methods="laser")))
        out = run_grid(cfg, threads=0).out_dir
        res = rows(out / "results.csv")
        for a in rows(out / "aggregate.csv"):
            vals = [float(r["accuracy"]) for r in res
                    if (r["method"], r["p_miss_train"], r["p_miss_test"]) == (a["method"], a["p_miss_train"], a["p_miss_test"])]
            assert abs(float(a["accuracy_mean"]) - statistics.fmean(vals)) < 1e-12
            assert abs(float(a["accuracy_std"]) - statistics.stdev(vals)) < 1e-12

    def test_default_grid_size(self):
        cfg = RunConfig()
        jobs = len(cfg.methods) * len(cfg.p_miss_train) * len(cfg.seeds)
        assert jobs * len(cfg.p_miss_test) == 270

    def test_rerun_identical(self, tmp_path):
        cfg = load_config(write(tmp_path, TINY.format(methods="ensemble, plugvfl")))
        a = (run_grid(cfg, threads=0).out_dir / "aggregate.csv").read_bytes()
        b = (run_grid(cfg, threads=0).out_dir / "aggregate.csv").read_bytes()
        assert a == b

    def test_csv_source(self, tmp_path):
        for name, seed in (("train.csv", 0), ("test.csv", 1)):
            save_csv(synth_classification(40, K=2, widths=[2, 3], C=2, seed=seed), tmp_path / name)
        text = (
            "[dataset]\nsource = csv\ntrain_path = train.csv\ntest_path = test.csv\nschema = 0:2,2:5\n"
            "[experiment]\nmethods = laser\np_miss_train = 0.0\np_miss_test = 0.0\nseeds = 1\nepochs = 1\n"
            "[output]\nout_dir = out\n"
        )
        summary = run_grid(load_config(write(tmp_path, text)), threads=0)
        res = rows(summary.out_dir / "results.csv")
        assert len(res) == 1 and res[0]["f1"] != ""

    def test_failure_recorded(self, tmp_path, monkeypatch):
        from laser_vfl import runner

        def boom(*a, **k):
            raise RuntimeError("synthetic failure")

        cfg = load_config(write(tmp_path, TINY.format(methods="laser")))
        monkeypatch.setattr(runner, "train", boom)
        summary = run_grid(cfg, threads=0)
        assert summary.exit_code == 2 and len(summary.failures) == 4
        assert "synthetic failure" in (summary.out_dir / "failures.txt").read_text()

    def test_aggregate_single_seed(self):
        agg = aggregate([{"method": "m", "p_miss_train": "0.0", "p_miss_test": "0.0", "seed": 1,
                          "accuracy": "50.0", "f1": "", "n_fallbacks": 0}])
        assert agg[0]["accuracy_mean"] == "50.0" and agg[0]["accuracy_std"] == "" and agg[0]["f1_mean"] == ""

    def test_threads_env(self, monkeypatch):
        monkeypatch.setenv("LASER_VFL_THREADS", "3")
        assert threads_from_env() == 3
        monkeypatch.delenv("LASER_VFL_THREADS")
        assert threads_from_env() == 0


class TestCli:
    def test_validate_ok(self, tmp_path, capsys):
        assert main(["validate", str(write(tmp_path, TINY.format(methods="laser")))]) == 0
        assert "ok" in capsys.readouterr().out

    def test_validate_bad(self, tmp_path, capsys):
        assert main(["validate", str(write(tmp_path, "[experiment]\nmethods = nope\n"))]) == 1
        assert "unknown method" in capsys.readouterr().out

    def test_run_with_overrides(self, tmp_path, capsys):
        cfg = write(tmp_path, TINY.format(methods="laser, local"))
        out = tmp_path / "elsewhere"
        assert main(["run", str(cfg), "--out", str(out), "--methods", "local", "--seeds", "7"]) == 0
        (run_dir,) = out.iterdir()
        res = rows(run_dir / "results.csv")
        assert {r["method"] for r in res} == {"local"} and {r["seed"] for r in res} == {"7"}
        assert "6 result rows" in capsys.readouterr().out

    def test_run_bad_override(self, tmp_path):
        cfg = write(tmp_path, TINY.format(methods="laser"))
        assert main(["run", str(cfg), "--methods", "wrong"]) == 1
        assert main(["run", str(cfg), "--seeds", "x"]) == 1

    def test_run_bad_config(self, tmp_path):
        assert main(["run", str(tmp_path / "missing.ini")]) == 1

    def test_usage_error(self):
        with pytest.raises(SystemExit):
            main([])
