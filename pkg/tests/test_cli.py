import csv
import json

import numpy as np
import pytest
from click.testing import CliRunner

from ncadmm import cli, data


@pytest.fixture
def runner():
    return CliRunner()


def write_spec(path, **overrides):
    spec = {
        "version": "v1",
        "problem": {"kind": "graph_guided", "n": 120, "d": 6, "seed": 3,
                    "nu": 1e-5, "empty_support": True},
        "solvers": [
            {"name": "dete", "variant": "dete", "eta": 1.0, "rho": 60.0, "T": 30},
            {"name": "stoc", "variant": "stoc", "eta": 1.0, "rho": 60.0,
             "M": 20, "T": 30},
        ],
        "repetitions": 2,
        "seed_base": 11,
        "trace_stride": 5,
    }
    spec.update(overrides)
    with open(path, "w") as fh:
        json.dump(spec, fh)
    return spec


def read_csv(path):
    with open(path) as fh:
        return list(csv.reader(fh))


class TestRun:
    def test_outputs_and_header(self, runner, tmp_path):
        spec = tmp_path / "exp.json"
        write_spec(spec)
        out = tmp_path / "out"
        res = runner.invoke(
            cli.main, ["run", "--spec", str(spec), "--out", str(out)]
        )
        assert res.exit_code == 0, res.output
        for name in ("dete", "stoc"):
            for rep in range(2):
                assert (out / f"{name}_rep{rep}.csv").exists()
            assert (out / f"{name}_mean.csv").exists()
        rows = read_csv(out / "dete_rep0.csv")
        assert rows[0] == cli.CSV_COLUMNS
        # stride 5 over 30 iterations
        assert [int(r[0]) for r in rows[1:]] == [5, 10, 15, 20, 25, 30]
        summary = json.loads((out / "summary.json").read_text())
        assert set(summary["solvers"]) == {"dete", "stoc"}
        assert summary["solvers"]["dete"]["certificate"]["accepted"] is True

    def test_rerun_identical_up_to_wall_time(self, runner, tmp_path):
        spec = tmp_path / "exp.json"
        write_spec(spec)
        outs = []
        for tag in ("a", "b"):
            out = tmp_path / tag
            res = runner.invoke(
                cli.main, ["run", "--spec", str(spec), "--out", str(out)]
            )
            assert res.exit_code == 0, res.output
            outs.append(out)
        wt = cli.CSV_COLUMNS.index("wall_time_s")
        for name in ("dete_rep0.csv", "dete_rep1.csv", "stoc_rep0.csv",
                     "stoc_mean.csv"):
            a = read_csv(outs[0] / name)
            b = read_csv(outs[1] / name)
            for ra, rb in zip(a, b):
                ra[wt] = rb[wt] = ""
                assert ra == rb

    def test_uncertified_refused_then_overridden(self, runner, tmp_path):
        spec = tmp_path / "exp.json"
        write_spec(spec, solvers=[
            {"name": "bad", "variant": "stoc", "eta": 1.0, "rho": 0.1,
             "M": 20, "T": 10},
        ])
        out = tmp_path / "out"
        res = runner.invoke(
            cli.main, ["run", "--spec", str(spec), "--out", str(out)]
        )
        assert res.exit_code == 2
        assert "refused" in res.output
        res = runner.invoke(
            cli.main,
            ["run", "--spec", str(spec), "--out", str(out), "--allow-uncertified"],
        )
        assert res.exit_code == 0, res.output

    def test_bad_version_exits_2(self, runner, tmp_path):
        spec = tmp_path / "exp.json"
        write_spec(spec, version="v0")
        res = runner.invoke(
            cli.main, ["run", "--spec", str(spec), "--out", str(tmp_path / "o")]
        )
        assert res.exit_code == 2

    def test_lyapunov_column_filled(self, runner, tmp_path):
        spec = tmp_path / "exp.json"
        write_spec(spec)
        out = tmp_path / "out"
        runner.invoke(cli.main, ["run", "--spec", str(spec), "--out", str(out)])
        rows = read_csv(out / "dete_rep0.csv")
        col = cli.CSV_COLUMNS.index("lyapunov")
        vals = [float(r[col]) for r in rows[1:]]
        assert all(np.isfinite(vals))


class TestCheckParams:
    def test_accept_and_reject(self, runner, tmp_path):
        spec = tmp_path / "exp.json"
        write_spec(spec)
        ok = runner.invoke(
            cli.main,
            ["check-params", "--spec", str(spec), "--variant", "dete",
             "--eta", "1.0", "--rho", "60.0"],
        )
        assert ok.exit_code == 0, ok.output
        assert json.loads(ok.output)["accepted"] is True
        bad = runner.invoke(
            cli.main,
            ["check-params", "--spec", str(spec), "--variant", "stoc",
             "--eta", "1.0", "--rho", "0.1"],
        )
        assert bad.exit_code == 2


class TestRhoSweep:
    def test_table_written(self, runner, tmp_path):
        spec = tmp_path / "exp.json"
        write_spec(
            spec,
            solvers=[{"name": "dete", "variant": "dete", "eta": 1.0,
                      "rho": 60.0, "T": 10}],
            repetitions=1,
        )
        out = tmp_path / "sweep"
        res = runner.invoke(
            cli.main,
            ["rho-sweep", "--spec", str(spec), "--out", str(out),
             "--rho", "40", "--rho", "80", "--allow-uncertified"],
        )
        assert res.exit_code == 0, res.output
        rows = read_csv(out / "sweep_table.csv")
        assert rows[0] == ["rho", "solver", "final_objective",
                           "final_feas_sq", "certified"]
        assert {r[0] for r in rows[1:]} == {"40.0", "80.0"}


class TestDataCommands:
    def test_gen_and_parse(self, runner, tmp_path):
        path = tmp_path / "toy.libsvm"
        res = runner.invoke(
            cli.main,
            ["gen-data", "--kind", "graph_guided", "--n", "30", "--d", "5",
             "--seed", "1", "--out", str(path)],
        )
        assert res.exit_code == 0, res.output
        assert path.exists() and (tmp_path / "toy.libsvm.meta.json").exists()
        res = runner.invoke(cli.main, ["parse", "--path", str(path)])
        assert res.exit_code == 0
        meta = json.loads(res.output)
        assert meta["n"] == 30 and meta["d"] == 5

    def test_parse_bad_file_exits_2(self, runner, tmp_path):
        path = tmp_path / "bad.libsvm"
        path.write_text("+1 2:1.0 1:2.0\n")
        res = runner.invoke(cli.main, ["parse", "--path", str(path)])
        assert res.exit_code == 2


class TestBuildProblem:
    def test_libsvm_kind(self, tmp_path, rng):
        ds, _, _ = data.gen_graph_guided(60, 5, seed=2)
        path = tmp_path / "d.libsvm"
        data.write_libsvm(ds, path)
        prob, test, info = cli.build_problem(
            {"kind": "libsvm", "path": str(path), "support_density": 0.2,
             "seed": 1}
        )
        assert prob.n + test.n == 60
        assert info["kind"] == "libsvm"

    def test_unknown_kind_rejected(self):
        from ncadmm.exceptions import ConfigError

        with pytest.raises(ConfigError):
            cli.build_problem({"kind": "mystery"})
