import csv
import json
import math
import subprocess
import sys
from fractions import Fraction

import pytest

from pwlbfgs.experiments import cli, ensemble, runner, svg, verify
from pwlbfgs.linesearch import LineSearchParams


def run_cli(*argv):
    return cli.main([str(a) for a in argv])


def read_csv(path):
    with open(path, newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(fh))


class TestRunCommand:
    def test_example_default(self, tmp_path):
        out = tmp_path / "ex"
        assert run_cli("run", "--init-file", "example", "--c1", "1e-4", "--c2", "0.5",
                       "--out", out) == 0
        summ = json.loads((tmp_path / "ex.json").read_text())
        assert summ["terminated_at"] == 9 and summ["cause"] == "UnboundedDirection"
        assert summ["invariants"] == "pass"
        rows = read_csv(tmp_path / "ex.csv")
        assert list(rows[0]) == list(runner.TRACE_COLUMNS)
        assert [int(r["k"]) for r in rows] == list(range(10))
        assert rows[-1]["alpha"] == ""
        assert "PASS" in (tmp_path / "ex.invariants.txt").read_text()

    def test_example_degenerate(self, tmp_path):
        out = tmp_path / "deg"
        assert run_cli("run", "--init-file", "example", "--c1", "0", "--c2", "1",
                       "--allow-degenerate-params", "--out", out, "--svg") == 0
        summ = json.loads((tmp_path / "deg.json").read_text())
        assert summ["terminated_at"] == 10
        rows = read_csv(tmp_path / "deg.csv")
        first_below = next(int(r["k"]) for r in rows if float(r["psi"]) < 1)
        assert first_below == summ["terminated_at"] - 2
        text = (tmp_path / "deg.svg").read_text()
        assert text.startswith("<svg") and text.count("<polyline") == 3

    def test_degenerate_needs_flag(self, capsys):
        with pytest.raises(SystemExit) as exc:
            run_cli("run", "--init-file", "example", "--c1", "0", "--c2", "1")
        assert exc.value.code == 2

    @pytest.mark.parametrize("argv", [
        ("run",),
        ("run", "--dim", "3", "--svg"),
        ("run", "--dim", "1"),
        ("run", "--dim", "3", "--precision-bits", "40"),
        ("run", "--dim", "4", "--init-file", "example"),
        ("ensemble", "--runs", "3"),
    ])
    def test_invalid_flags(self, argv, capsys):
        with pytest.raises(SystemExit) as exc:
            run_cli(*argv)
        assert exc.value.code == 2

    def test_high_dimension_stops_at_once(self, capsys):
        assert run_cli("run", "--dim", "30", "--seed", "4") == 0
        summ = json.loads(capsys.readouterr().out)
        assert summ["iterations"] == 1 and summ["terminated_at"] == 0

    def test_byte_identical_outputs(self, tmp_path):
        for name in ("a", "b"):
            run_cli("run", "--dim", "3", "--seed", "11", "--out", tmp_path / name, "--svg", "--hex")
        for ext in (".csv", ".json", ".svg", ".invariants.txt"):
            assert (tmp_path / f"a{ext}").read_bytes() == (tmp_path / f"b{ext}").read_bytes()

    def test_hex_init_replays_exactly(self, tmp_path):
        run_cli("run", "--dim", "3", "--seed", "2", "--out", tmp_path / "a", "--hex")
        summ = json.loads((tmp_path / "a.json").read_text())
        (tmp_path / "init.json").write_text(json.dumps(summ["init"]))
        run_cli("run", "--init-file", tmp_path / "init.json", "--out", tmp_path / "b", "--hex")
        assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()

    def test_derived_columns_consistent(self, tmp_path):
        run_cli("run", "--init-file", "example", "--out", tmp_path / "t")
        for r in read_csv(tmp_path / "t.csv"):
            assert math.isclose(float(r["log_psi"]), math.log(float(r["psi"])), rel_tol=1e-12)
            assert math.isclose(float(r["psi"]),
                                float(r["ez"]) * float(r["zx"]) / float(r["D_recomputed"]),
                                rel_tol=1e-12)
            assert math.isclose(float(r["D"]), float(r["D_recomputed"]), rel_tol=1e-12)
            if r["alpha"]:
                assert math.isclose(float(r["a"]), float(r["alpha"]) / float(r["alpha_star"]),
                                    rel_tol=1e-12)

    def test_digits_flag(self, tmp_path):
        run_cli("run", "--init-file", "example", "--digits", "8", "--out", tmp_path / "d")
        row = read_csv(tmp_path / "d.csv")[0]
        assert len(row["psi"].replace(".", "").lstrip("0")) <= 8


class TestEnsemble:
    def test_jobs_do_not_change_results(self, tmp_path):
        run_cli("ensemble", "--dim", "3", "--runs", "40", "--seed", "3", "--out", tmp_path / "one")
        run_cli("ensemble", "--dim", "3", "--runs", "40", "--seed", "3", "--jobs", "2",
                "--out", tmp_path / "two")
        for ext in (".json", ".csv"):
            assert (tmp_path / f"one{ext}").read_bytes() == (tmp_path / f"two{ext}").read_bytes()

    def test_stats_are_consistent(self, tmp_path):
        run_cli("ensemble", "--dim-list", "2,5", "--runs", "60", "--seed", "1", "--verify",
                "--out", tmp_path / "e")
        doc = json.loads((tmp_path / "e.json").read_text())
        assert [e["n"] for e in doc["ensembles"]] == [2, 5]
        for e in doc["ensembles"]:
            assert e["min"] <= e["median"] <= e["max"]
            assert e["min"] <= e["mean"] <= e["max"]
            assert sum(e["causes"].values()) == e["runs"] == 60
            assert sum(e["histogram"].values()) == 60
            assert e["verify_failures"] == 0 and e["anomalies"] == 0
        assert len(read_csv(tmp_path / "e.csv")) == 120

    def test_exact_median_and_mean(self):
        outs = [ensemble.RunOutcome(i, it, "UnboundedDirection") for i, it in enumerate([1, 2, 2, 5])]
        st = ensemble.EnsembleStats.from_outcomes(2, 0, outs)
        assert st.median == 2 and st.mean == Fraction(5, 2)
        outs = [ensemble.RunOutcome(i, it, "UnboundedDirection") for i, it in enumerate([1, 2])]
        st = ensemble.EnsembleStats.from_outcomes(2, 0, outs)
        assert st.median == Fraction(3, 2)
        assert st.to_dict()["median"] == 1.5

    def test_anomalies_counted(self):
        outs = [ensemble.RunOutcome(0, 3, "UnboundedDirection"),
                ensemble.RunOutcome(1, 5, "TrialCapExceeded")]
        assert ensemble.EnsembleStats.from_outcomes(2, 0, outs).anomalies == 1

    def test_run_zero_matches_single_run(self, ctx):
        p = LineSearchParams()
        out = ensemble.simulate(3, 8, 0, p)
        rec, _, _ = runner.execute(runner.RunConfig(n=3, seed=8, params=p))
        assert out.iterations == rec.termination.iterations


class TestVerifyCommand:
    @pytest.mark.parametrize("suite", ["lemmas", "recursion", "affine"])
    def test_suites_pass(self, suite, tmp_path):
        code = run_cli("verify", "--suite", suite, "--runs", "12", "--dim-list", "2,3",
                       "--out", tmp_path / "v.json")
        doc = json.loads((tmp_path / "v.json").read_text())
        assert code == 0 and doc["verdict"] == "pass"

    def test_exit_bits(self, monkeypatch, capsys):
        def failing(name):
            return lambda runs, seed, dims, **kw: {"suite": name, "runs": runs, "ok": False,
                                                   "max_relative_deviation": "1"}
        monkeypatch.setattr(verify, "recursion_suite", failing("recursion"))
        monkeypatch.setattr(verify, "affine_suite", failing("affine"))
        assert run_cli("verify", "--suite", "recursion", "--runs", "1") == 8
        assert run_cli("verify", "--suite", "affine", "--runs", "1") == 16
        assert run_cli("verify", "--runs", "2") == 8 | 16


class TestSvg:
    def test_deterministic_and_skips_missing(self):
        rows = [{"k": 0, "log_delta_psi": 1.0, "log_a": 2.0, "log_psi": 3.0},
                {"k": 1, "log_delta_psi": None, "log_a": None, "log_psi": -0.5}]
        a, b = svg.render(rows, "t"), svg.render(rows, "t")
        assert a == b and a.count("<circle") == 4


def test_console_script_entry_point():
    res = subprocess.run([sys.executable, "-m", "pwlbfgs.experiments.cli", "run",
                          "--init-file", "example"], capture_output=True, text=True)
    assert res.returncode == 0
    assert json.loads(res.stdout)["terminated_at"] == 9
