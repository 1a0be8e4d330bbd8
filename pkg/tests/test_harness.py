"""Config parsing, CLI subcommands, SVG rendering."""

import csv

import numpy as np
import pytest

import fedamp as fa
from fedamp.cli import main, paperdemo_arms
from fedamp.svg import line_chart

BASE_CFG = """\
[population]
N = 8
m = 4
noise = gaussian
sigma = 0.5

[pattern]
kind = permutation
S = 2

[run]
gamma = 0.05
eta = 2.0
I = 3
P = 4
T = 64
x0_kind = uniform
x0_scale = 2.0

[seeds]
master = 3
replications = 2
"""


@pytest.fixture
def cfg_file(tmp_path):
    path = tmp_path / "exp.cfg"
    path.write_text(BASE_CFG)
    return str(path)


class TestConfig:
    def test_round_trip_idempotent(self):
        cfg = fa.parse_config_text(BASE_CFG)
        text = cfg.serialize()
        assert fa.parse_config_text(text).serialize() == text
        assert fa.parse_config_text(text).values == cfg.values

    def test_unknown_keys_rejected(self):
        with pytest.raises(fa.ConfigError):
            fa.parse_config_text("[population]\nN = 4\nbogus = 1\n")
        with pytest.raises(fa.ConfigError):
            fa.parse_config_text("[mystery]\nx = 1\n")

    def test_typed_values_and_defaults(self):
        cfg = fa.parse_config_text(BASE_CFG)
        assert cfg.get("run", "T") == 64
        assert cfg.get("run", "gamma") == 0.05
        assert cfg.get("population", "L") == 1.0   # schema default
        with pytest.raises(fa.ConfigError):
            fa.parse_config_text("[run]\nT = sixty\n")

    def test_missing_required_key(self):
        cfg = fa.parse_config_text("[population]\nm = 4\n")
        with pytest.raises(fa.ConfigError):
            cfg.get("population", "N")

    def test_overrides(self, cfg_file):
        cfg = fa.load_config(cfg_file, ["run.T=128", "population.sigma=0"])
        assert cfg.get("run", "T") == 128
        assert cfg.get("population", "sigma") == 0.0
        with pytest.raises(fa.ConfigError):
            fa.load_config(cfg_file, ["run.bogus=1"])
        with pytest.raises(fa.ConfigError):
            fa.load_config(cfg_file, ["justakey"])


class TestCliRun:
    def test_success_row_count(self, cfg_file, tmp_path):
        out = str(tmp_path / "o")
        assert main(["run", "--config", cfg_file, "--out", out]) == 0
        with open(out + "/metrics.csv") as fh:
            rows = list(csv.reader(fh))
        # header + replications * (T/eval_every + 1) checkpoints
        assert len(rows) == 1 + 2 * (64 // 4 + 1)
        assert rows[0] == ["run", "seed", "t", "f", "grad_norm_sq",
                           "min_grad_norm_sq", "is_boundary"]

    def test_byte_identical_reruns(self, cfg_file, tmp_path):
        a, b = str(tmp_path / "a"), str(tmp_path / "b")
        main(["run", "--config", cfg_file, "--out", a])
        main(["run", "--config", cfg_file, "--out", b])
        for name in ("metrics.csv", "meta.txt"):
            assert (tmp_path / "a" / name).read_bytes() == \
                   (tmp_path / "b" / name).read_bytes()

    def test_csv_is_loss_free(self, cfg_file, tmp_path):
        out = tmp_path / "o"
        main(["run", "--config", cfg_file, "--out", str(out)])
        pop_cfg = fa.load_config(cfg_file)
        from fedamp.config import (build_noise, build_population,
                                   build_run_config, build_schedule)
        pop = build_population(pop_cfg)
        rep_seed = fa.derive_seed(3, "rep0")
        sched = build_schedule(pop_cfg, pop.N, 64, rep_seed)
        rc = build_run_config(pop_cfg, pop, sched, rep_seed)
        tr = fa.run(pop, build_noise(pop_cfg), sched, rc,
                    fa.derive_seed(rep_seed, "run"))
        with open(out / "metrics.csv") as fh:
            rows = [r for r in csv.DictReader(fh) if r["run"] == "0"]
        assert [float(r["f"]) for r in rows] == list(tr.f)

    def test_bad_gamma_exit_1(self, cfg_file, tmp_path, capsys):
        code = main(["run", "--config", cfg_file, "--out",
                     str(tmp_path / "x"), "--set", "run.gamma=-1"])
        assert code == 1
        assert "gamma" in capsys.readouterr().err

    def test_divergence_exit_2_names_round(self, cfg_file, tmp_path, capsys):
        code = main(["run", "--config", cfg_file, "--out",
                     str(tmp_path / "x"), "--set", "run.gamma=10"])
        assert code == 2
        assert "round" in capsys.readouterr().err

    def test_unreadable_config_exit_1(self, tmp_path):
        assert main(["run", "--config", str(tmp_path / "nope.cfg")]) == 1


class TestCliSweep:
    def test_aggregate_rows(self, cfg_file, tmp_path):
        out = str(tmp_path / "s")
        code = main(["sweep", "--config", cfg_file, "--out", out,
                     "--set", "sweep.axis=T", "--set", "sweep.values=64 128 256"])
        assert code == 0
        with open(out + "/sweep.csv") as fh:
            rows = list(csv.DictReader(fh))
        assert [r["value"] for r in rows] == ["64", "128", "256"]
        assert all(r["runs"] == "2" for r in rows)

    def test_speedup_axis_bookkeeping(self, cfg_file, tmp_path):
        out = str(tmp_path / "s")
        code = main(["sweep", "--config", cfg_file, "--out", out,
                     "--set", "sweep.axis=S", "--set", "sweep.values=2 4 8",
                     "--set", "sweep.st_fixed=true"])
        assert code == 0
        with open(out + "/sweep.csv") as fh:
            rows = list(csv.DictReader(fh))
        # S*T held at 2*64; P tracks N/S for permutation selection
        assert [(r["S"], r["T"], r["P"]) for r in rows] == \
               [("2", "64", "4"), ("4", "32", "2"), ("8", "16", "1")]

    def test_empty_axis_exit_1(self, cfg_file, tmp_path):
        code = main(["sweep", "--config", cfg_file, "--out",
                     str(tmp_path / "s"), "--set", "sweep.axis=T",
                     "--set", "sweep.values="])
        assert code == 1

    def test_all_points_failing_exit_2(self, cfg_file, tmp_path):
        code = main(["sweep", "--config", cfg_file, "--out", str(tmp_path / "s"),
                     "--set", "sweep.axis=T", "--set", "sweep.values=64 128",
                     "--set", "run.gamma=10"])
        assert code == 2


class TestCliDiagnose:
    def test_permutation_alignment(self, cfg_file, tmp_path):
        out = str(tmp_path / "d")
        code = main(["diagnose", "--config", cfg_file, "--out", out,
                     "--set", "diagnose.P_list=1 2 4 8"])
        assert code == 0
        with open(out + "/divergence.csv") as fh:
            rows = {int(r["P"]): r for r in csv.DictReader(fh)}
        assert float(rows[4]["delta2"]) <= 1e-28   # aligned N/S window
        assert float(rows[1]["delta2"]) > 0
        assert all(r["exact"] == "1" for r in rows.values())

    def test_exact_mode_needs_quadratic(self, cfg_file, tmp_path):
        code = main(["diagnose", "--config", cfg_file, "--out",
                     str(tmp_path / "d"), "--set", "population.kind=logistic"])
        assert code == 1


class TestCliBounds:
    def test_hoeffding_csv(self, cfg_file, tmp_path):
        out = str(tmp_path / "b")
        code = main(["bounds", "--config", cfg_file, "--out", out,
                     "--set", "pattern.kind=independent",
                     "--set", "bounds.check=hoeffding",
                     "--set", "bounds.trials=500"])
        assert code == 0
        with open(out + "/bounds.csv") as fh:
            rows = list(csv.DictReader(fh))
        assert rows[0]["bound"] == "hoeffding"
        assert rows[0]["pass"] == "1"

    def test_wrong_pattern_exit_1(self, cfg_file, tmp_path):
        code = main(["bounds", "--config", cfg_file, "--out",
                     str(tmp_path / "b"), "--set", "bounds.check=chebyshev"])
        assert code == 1   # chebyshev needs a markov pattern


class TestCliPlot:
    def test_two_series_svg(self, cfg_file, tmp_path):
        out = str(tmp_path / "o")
        main(["run", "--config", cfg_file, "--out", out])
        assert main(["plot", out + "/metrics.csv", "--out", out]) == 0
        svg = (tmp_path / "o" / "metrics.svg").read_text()
        assert svg.count("<polyline") == 2
        assert "run 0" in svg and "run 1" in svg

    def test_plot_deterministic(self, cfg_file, tmp_path):
        out = str(tmp_path / "o")
        main(["run", "--config", cfg_file, "--out", out])
        main(["plot", out + "/metrics.csv", "--out", out])
        first = (tmp_path / "o" / "metrics.svg").read_bytes()
        main(["plot", out + "/metrics.csv", "--out", out])
        assert (tmp_path / "o" / "metrics.svg").read_bytes() == first

    def test_malformed_csv_exit_1(self, tmp_path, capsys):
        bad = tmp_path / "bad.csv"
        bad.write_text("run,seed,t,f,grad_norm_sq,min_grad_norm_sq,is_boundary\n"
                       "0,1,notanint,1,1,1,0\n")
        assert main(["plot", str(bad), "--out", str(tmp_path)]) == 1
        assert "row 2" in capsys.readouterr().err

    def test_missing_file_exit_1(self, tmp_path):
        assert main(["plot", str(tmp_path / "nope.csv"),
                     "--out", str(tmp_path)]) == 1


class TestSvg:
    def test_deterministic_and_structured(self):
        series = [("a", [1, 2, 3], [1.0, 0.5, 0.25]),
                  ("b", [1, 2, 3], [2.0, 1.0, 0.5])]
        one = line_chart(series, title="demo")
        two = line_chart(series, title="demo")
        assert one == two
        assert one.count("<polyline") == 2
        assert one.startswith("<svg ")

    def test_empty_input_rejected(self):
        with pytest.raises(fa.ChartError):
            line_chart([])
        with pytest.raises(fa.ChartError):
            line_chart([("a", [1, 2], [0.0, -1.0])])  # nothing positive on log y

    def test_log_axis_drops_nonpositive(self):
        svg = line_chart([("a", [1, 2, 3], [1.0, 0.0, 4.0])])
        # two surviving points -> one polyline with two coordinates
        poly = [ln for ln in svg.split("\n") if ln.startswith("<polyline")][0]
        assert poly.count(",") == 2

    def test_shape_mismatch_rejected(self):
        with pytest.raises(fa.ChartError):
            line_chart([("a", [1, 2, 3], [1.0, 2.0])])


class TestPaperdemoShape:
    def test_single_cycle_interval_beats_every_round(self):
        # amplifying every round inside one availability group is worse than
        # amplifying once per full cycle
        cycle, _ = paperdemo_arms(0, 0)
        per_round, _ = paperdemo_arms(0, 0, P=1)
        assert cycle["amplified"] < per_round["amplified"]
