import json
import math
import os

import numpy as np
import pytest

from targetnet_lab import ConfigError
from targetnet_lab.harness import cli
from targetnet_lab.harness.checks import run_checks
from targetnet_lab.harness.config import grid, load_config, parse_config
from targetnet_lab.harness.fixed_points import sweep_fixed_points, table_result_set
from targetnet_lab.harness.io import (
    CSV_HEADER,
    read_csv,
    read_npz,
    result_set_from_points,
    write_csv,
    write_npz,
    write_svg,
)
from targetnet_lab.harness.simulate import log_times, run, simulate_points

CONFIGS = os.path.join(os.path.dirname(__file__), "..", "configs")

SMALL = """
environment:
  name: random
  seed: 3
  n_states: 4
  n_actions: 2
  feature_dim: 2
  feature_norm: 0.5
algorithm:
  name: alg1_q_eval
  alpha: 0.05
  beta: 0.01
horizon: 1500
replications: 3
sweep:
  eta: [0.0, 0.5]
"""

DIVERGING = """
environment: {name: baird-eval, behavior: mostly-dashed}
algorithm: {name: baseline_td_ridge, alpha: 0.01}
horizon: 20000
replications: 2
cap: 1.0e4
sweep: {eta: [0.0]}
"""


def write(tmp_path, text, name="exp.yaml"):
    path = tmp_path / name
    path.write_text(text)
    return str(path)


class TestConfig:
    def test_defaults(self):
        cfg = parse_config("environment: {name: baird-eval}\nalgorithm: {name: alg1_td_variant}\n")
        assert cfg.horizon == 1000
        assert cfg.seeds == [0]
        assert cfg.cap == 1e9
        assert cfg.thresholds == (1e3,)

    def test_fingerprint_ignores_layout_and_output(self):
        a = parse_config(SMALL)
        b = parse_config(SMALL.replace("horizon: 1500", "horizon: 1500.0\noutput: /tmp/elsewhere")
                         .replace("  alpha: 0.05", "  alpha: 5.0e-2"))
        assert a.fingerprint() == b.fingerprint()
        assert len(a.fingerprint()) == 12

    def test_fingerprint_sees_values(self):
        assert parse_config(SMALL).fingerprint() != parse_config(SMALL.replace("3\n", "4\n", 1)).fingerprint()

    def test_error_names_field_and_line(self):
        with pytest.raises(ConfigError) as info:
            parse_config(SMALL.replace("horizon: 1500", "horizon: 0"))
        assert info.value.field == "horizon"
        assert info.value.line == 13
        assert "line 13" in str(info.value)

    @pytest.mark.parametrize("text, field", [
        ("environment: {name: moon}\nalgorithm: {name: alg1_q_eval}\n", "environment.name"),
        ("environment: {name: random}\nalgorithm: {name: sarsa}\n", "algorithm.name"),
        ("environment: {name: random}\nalgorithm: {name: alg1_q_eval, eta: -1}\n", "algorithm.eta"),
        ("environment: {name: random}\nalgorithm: {name: alg1_q_eval, projection: {r1: 1, r2: 2}}\n",
         "algorithm.projection"),
        ("environment: {name: random}\nalgorithm: {name: alg1_q_eval}\nreplications: 0\n", "replications"),
        ("environment: {name: random}\nalgorithm: {name: alg1_q_eval}\ncolour: red\n", "colour"),
    ])
    def test_rejections(self, text, field):
        with pytest.raises(ConfigError) as info:
            parse_config(text)
        assert info.value.field == field

    def test_malformed_yaml(self):
        with pytest.raises(ConfigError, match="malformed"):
            parse_config("environment: [unclosed\n")

    def test_grid_range(self):
        np.testing.assert_allclose(grid({"start": 0.1, "stop": 0.3, "step": 0.1}), [0.1, 0.2, 0.3])

    def test_points_cross_product(self):
        cfg = load_config(os.path.join(CONFIGS, "kolter_sweep.yaml"))
        pts = list(cfg.points())
        assert len(pts) == 5 * 199
        assert pts[0][2] == "environment.d1"

    def test_shipped_configs_parse(self):
        for name in sorted(os.listdir(CONFIGS)):
            load_config(os.path.join(CONFIGS, name))


class TestLogTimes:
    def test_dense_then_sparse(self):
        ts = log_times(1025)
        assert ts[:3].tolist() == [0, 1, 2]
        assert ts[1000] == 1000
        assert ts[-3:].tolist() == [1010, 1020, 1025]

    def test_short(self):
        assert log_times(3).tolist() == [0, 1, 2, 3]


class TestSimulation:
    def test_shapes_and_determinism(self):
        cfg = parse_config(SMALL)
        a = run(cfg)
        b = run(cfg)
        assert [pr.eta for pr in a] == [0.0, 0.5]
        assert len(a[0].runs) == 3
        for pa, pb in zip(a, b):
            np.testing.assert_array_equal(pa.stacked("value_error"), pb.stacked("value_error"))

    def test_seeds_give_different_paths(self):
        pr = run(parse_config(SMALL))[0]
        v = pr.stacked("w_norm")
        assert not np.array_equal(v[0], v[1])

    def test_jobs_do_not_change_results(self):
        cfg = parse_config(SMALL)
        for pa, pb in zip(run(cfg, jobs=1), run(cfg, jobs=2)):
            np.testing.assert_array_equal(pa.stacked("value_error"), pb.stacked("value_error"))

    def test_point_results_independent_of_batching(self):
        cfg = parse_config(SMALL)
        both = run(cfg)
        alone = simulate_points(cfg, [list(cfg.points())[1]])
        np.testing.assert_array_equal(both[1].stacked("w_norm"), alone[0].stacked("w_norm"))

    def test_cap_terminates_runs(self):
        cfg = parse_config(DIVERGING)
        pr = run(cfg)[0]
        for r in pr.runs:
            assert r.termination == "value-exceeded-cap"
            assert r.cap_step is not None and r.cap_step < 20000
            assert r.first_above[1e3] is not None and r.first_above[1e3] <= r.cap_step
        assert pr.t[-1] < 20000

    def test_tracks_fixed_point(self):
        from targetnet_lab.harness.fixed_points import fixed_point_rows

        text = SMALL.replace("horizon: 1500", "horizon: 40000").replace("alpha: 0.05", "alpha: 0.02")
        cfg = parse_config(text)
        target = {r.eta: r.error for r in fixed_point_rows(cfg)}
        for pr in run(cfg):
            final = pr.stacked("value_error")[:, -200:].mean()
            assert final == pytest.approx(target[pr.eta], rel=0.15, abs=0.05)


class TestIO:
    @pytest.fixture(scope="class")
    @classmethod
    def result(cls):
        cfg = parse_config(SMALL)
        return cfg, result_set_from_points(cfg, run(cfg))

    def test_csv_round_trip(self, result, tmp_path):
        cfg, rs = result
        rows = read_csv(write_csv(rs, tmp_path))
        first = [r for r in rows if r["metric"] == "value_error" and r["eta"] == 0.0]
        mean = rs.points[0]["series"]["value_error"].mean(axis=0)
        std = rs.points[0]["series"]["value_error"].std(axis=0)
        np.testing.assert_array_equal([r["mean"] for r in first], mean)
        np.testing.assert_array_equal([r["std"] for r in first], std)
        assert {r["n"] for r in rows} == {3}
        with open(os.path.join(tmp_path, os.listdir(tmp_path)[0])) as fh:
            assert fh.readline().strip() == ",".join(CSV_HEADER)

    def test_npz_round_trip_and_bytes(self, result, tmp_path):
        _, rs = result
        p1 = write_npz(rs, tmp_path / "a")
        p2 = write_npz(rs, tmp_path / "b")
        assert open(p1, "rb").read() == open(p2, "rb").read()
        back = read_npz(p1)
        assert back.fingerprint == rs.fingerprint
        np.testing.assert_array_equal(back.points[1]["series"]["w_norm"], rs.points[1]["series"]["w_norm"])

    def test_svg_is_deterministic(self, result, tmp_path):
        _, rs = result
        a = open(write_svg(rs, tmp_path / "a"), "rb").read()
        b = open(write_svg(rs, tmp_path / "b"), "rb").read()
        assert a == b and a.startswith(b"<?xml")

    def test_inf_rows_have_zero_std(self, tmp_path):
        cfg = load_config(os.path.join(CONFIGS, "kolter_sweep.yaml"))
        rows = sweep_fixed_points(cfg)
        rs = table_result_set(cfg, rows)
        out = read_csv(write_csv(rs, tmp_path))
        inf = [r for r in out if math.isinf(r["mean"])]
        assert inf and all(r["std"] == 0.0 for r in inf)


class TestFixedPointSweep:
    def test_refined_singularity(self):
        cfg = load_config(os.path.join(CONFIGS, "kolter_sweep.yaml"))
        rows = sweep_fixed_points(cfg)
        refined = [r for r in rows if r.refined]
        assert [r.eta for r in refined] == [0.0, 0.01]
        assert refined[0].sweep_value == pytest.approx(0.6843859, abs=1e-6)
        assert refined[1].sweep_value == pytest.approx(0.8445961, abs=1e-6)
        assert len(rows) == 5 * 199 + 2


class TestChecks:
    def test_all_suites_pass(self):
        assert all(r.ok for r in run_checks(drift_horizon=500))

    def test_fault_injection_is_caught(self):
        res = run_checks(["oracles"], seeds=(0,), perturb=1e-6)
        assert not any(r.ok for r in res)

    def test_unknown_suite(self):
        with pytest.raises(ValueError):
            run_checks(["astrology"])


class TestCli:
    def test_run_writes_outputs(self, tmp_path, capsys):
        cfg = write(tmp_path, SMALL)
        assert cli.main(["run", cfg, "--out", str(tmp_path / "out"), "--horizon", "200"]) == 0
        info = json.loads(capsys.readouterr().out.strip().splitlines()[-1])
        assert info["runs"] == 6
        assert sorted(os.path.splitext(f)[1] for f in os.listdir(tmp_path / "out")) == [".csv", ".jsonl", ".npz"]

    def test_env_output_root(self, tmp_path, monkeypatch):
        monkeypatch.setenv("LAB_OUTPUT_ROOT", str(tmp_path / "root"))
        assert cli.main(["run", write(tmp_path, SMALL), "--horizon", "50"]) == 0
        assert len(os.listdir(tmp_path / "root")) == 3

    def test_emit_reproduces_csv(self, tmp_path):
        out = tmp_path / "out"
        cli.main(["run", write(tmp_path, SMALL), "--out", str(out), "--horizon", "100"])
        csv_name = [f for f in os.listdir(out) if f.endswith(".csv")][0]
        original = (out / csv_name).read_bytes()
        assert cli.main(["emit", str(out), "--format", "csv", "--out", str(tmp_path / "again")]) == 0
        assert (tmp_path / "again" / csv_name).read_bytes() == original
        assert cli.main(["emit", str(out), "--format", "svg"]) == 0

    def test_sweep_and_fixed_point(self, tmp_path, capsys):
        cfg = write(tmp_path, SMALL)
        assert cli.main(["sweep", cfg, "--out", str(tmp_path)]) == 0
        assert cli.main(["fixed-point", cfg]) == 0
        lines = [json.loads(x) for x in capsys.readouterr().out.strip().splitlines()]
        assert lines[-1]["certified"] is True

    @pytest.mark.parametrize("argv", [[], ["fly"], ["run"], ["check", "astrology"]])
    def test_usage_errors(self, argv):
        try:
            code = cli.main(argv)
        except SystemExit as exc:
            code = exc.code
        assert code == 1

    def test_config_error_exit_code(self, tmp_path, capsys):
        cfg = write(tmp_path, SMALL.replace("horizon: 1500", "horizon: -3"))
        assert cli.main(["run", cfg]) == 1
        assert "horizon" in capsys.readouterr().err

    def test_missing_config(self, tmp_path):
        assert cli.main(["run", str(tmp_path / "nope.yaml")]) == 1

    def test_runtime_error_exit_code(self, tmp_path):
        blocker = tmp_path / "file"
        blocker.write_text("x")
        assert cli.main(["run", write(tmp_path, SMALL), "--out", str(blocker / "sub"), "--horizon", "10"]) == 3

    def test_emit_empty_dir(self, tmp_path):
        assert cli.main(["emit", str(tmp_path), "--format", "csv"]) == 3

    def test_check_failure_exit_code(self, capsys):
        assert cli.main(["check", "mdp"]) == 0
        assert cli.main(["check", "oracles", "--perturb", "1e-6"]) == 2
