"""Command-line driver: exit codes, artifacts, and option precedence.

Everything goes through cli.main(argv) in-process so coverage tools see it
and failures carry real tracebacks.
"""

import csv
import json
import os

import pytest

from tpopf import cli

CASES = os.path.join(os.path.dirname(__file__), os.pardir, "cases")


def _case(name):
    return os.path.join(CASES, f"{name}.json")


class TestValidate:
    def test_good_case_passes(self, capsys):
        assert cli.main(["validate", _case("balanced4")]) == cli.EXIT_OK
        out = capsys.readouterr().out
        assert "ok" in out.lower()

    def test_missing_file_is_input_error(self, capsys):
        assert cli.main(["validate", "/nonexistent/case.json"]) == cli.EXIT_INPUT

    def test_malformed_json_is_input_error(self, tmp_path):
        bad = tmp_path / "bad.json"
        bad.write_text("{so close")
        assert cli.main(["validate", str(bad)]) == cli.EXIT_INPUT

    def test_invalid_network_is_input_error(self, tmp_path):
        doc = {
            "name": "noslack", "base": {"s_kva": 100.0},
            "buses": [{"id": "x", "phases": "abc", "kind": "load",
                       "base_kv": 2.4}],
            "branches": [], "loads": [],
        }
        f = tmp_path / "noslack.json"
        f.write_text(json.dumps(doc))
        assert cli.main(["validate", str(f)]) == cli.EXIT_INPUT


class TestPf:
    def test_prints_solution_summary(self, capsys):
        assert cli.main(["pf", _case("unbalanced4")]) == cli.EXIT_OK
        out = capsys.readouterr().out
        assert "iterations" in out.lower()

    def test_json_format(self, capsys):
        assert cli.main(["pf", _case("unbalanced4"), "--format", "json"]) == 0
        doc = json.loads(capsys.readouterr().out)
        assert doc["status"] == "converged"
        assert len(doc["state"]) == 12


class TestRunExitCodes:
    def test_full_board_succeeds(self, tmp_path):
        code = cli.main(["run", _case("unbalanced4"), "--out", str(tmp_path),
                         "--tol", "1e-7"])
        assert code == cli.EXIT_OK
        names = {p.name for p in tmp_path.iterdir()}
        assert {"P1.json", "P2.json", "P3.json", "P4.json", "P5.json",
                "summary.csv"} <= names

    def test_unknown_problem_is_input_error(self):
        assert cli.main(["run", _case("unbalanced4"),
                         "--problems", "P7"]) == cli.EXIT_INPUT

    def test_impossible_cap_is_solver_error(self, tmp_path, capsys):
        code = cli.main(["run", _case("unbalanced4"), "--problems", "P5",
                         "--u-vuf", "1e-9", "--u-pvur", "1e-9",
                         "--u-lvur", "1e-9", "--out", str(tmp_path)])
        assert code == cli.EXIT_SOLVER
        assert "P5" in capsys.readouterr().err

    def test_starved_iteration_budget_fails(self, tmp_path):
        ini = tmp_path / "solver.ini"
        ini.write_text("[solver]\nmax_iter = 1\n")
        code = cli.main(["run", _case("unbalanced4"), "--problems", "P1",
                         "--config", str(ini)])
        assert code == cli.EXIT_SOLVER

    def test_cli_flag_overrides_config(self, tmp_path):
        """--max-iter on the command line must win over the config file."""
        ini = tmp_path / "solver.ini"
        ini.write_text("[solver]\nmax_iter = 1\n")
        code = cli.main(["run", _case("unbalanced4"), "--problems", "P1",
                         "--config", str(ini), "--max-iter", "300"])
        assert code == cli.EXIT_OK

    def test_bad_method_is_input_error(self):
        assert cli.main(["run", _case("unbalanced4"), "--problems", "P1",
                         "--method", "simplex"]) == cli.EXIT_INPUT


@pytest.fixture(scope="module")
def board(tmp_path_factory):
    out = tmp_path_factory.mktemp("board")
    code = cli.main(["run", _case("unbalanced4"),
                     "--problems", "P0_pf,P1..P5", "--out", str(out),
                     "--format", "table,json", "--tol", "1e-8"])
    assert code == cli.EXIT_OK
    return out


class TestRunArtifacts:
    def test_no_temp_files_left(self, board):
        assert not [p for p in board.iterdir() if p.suffix == ".tmp"]

    def test_summary_csv_shape(self, board):
        with open(board / "summary.csv", newline="") as fh:
            rows = list(csv.DictReader(fh))
        assert [r["Problem"] for r in rows] == ["P0_pf", "P1", "P2", "P3",
                                                "P4", "P5"]
        for r in rows:
            # two-decimal fixed-point rendering throughout
            for col in ("Loss [kW]", "cos_phi", "Q_avg [kVAR]"):
                val = r[col]
                assert "." in val and len(val.split(".")[1]) == 2
                float(val)

    def test_summary_json_mirrors_csv(self, board):
        doc = json.loads((board / "summary.json").read_text())
        assert [row["Problem"] for row in doc] == ["P0_pf", "P1", "P2", "P3",
                                                   "P4", "P5"]
        with open(board / "summary.csv", newline="") as fh:
            rows = list(csv.DictReader(fh))
        for jrow, crow in zip(doc, rows):
            assert jrow == crow

    def test_problem_payload_fields(self, board):
        doc = json.loads((board / "P2.json").read_text())
        assert doc["problem"] == "P2"
        assert doc["case"] == "unbalanced4"
        assert doc["status"] == "optimal"
        assert doc["solver_status"] == "optimal"
        assert len(doc["q_inv_kvar"]) == 2
        assert len(doc["state"]) == 12
        assert set(doc["report"]["summary"]) >= {"vuf_avg", "vuf_max",
                                                 "pvur_max", "lvur_max"}

    def test_loss_ordering_on_board(self, board):
        loss = {}
        for code in ("P1", "P2", "P5"):
            doc = json.loads((board / f"{code}.json").read_text())
            loss[code] = doc["report"]["loss_kw"]
        assert loss["P1"] <= loss["P5"] + 1e-9
        assert loss["P5"] <= loss["P2"] + 1e-9


class TestThreads:
    def test_parallel_run_matches_serial(self, tmp_path, monkeypatch):
        serial = tmp_path / "serial"
        parallel = tmp_path / "parallel"
        monkeypatch.delenv("TPOPF_THREADS", raising=False)
        assert cli.main(["run", _case("unbalanced4"), "--out", str(serial),
                         "--tol", "1e-8"]) == cli.EXIT_OK
        monkeypatch.setenv("TPOPF_THREADS", "4")
        assert cli.main(["run", _case("unbalanced4"), "--out", str(parallel),
                         "--tol", "1e-8"]) == cli.EXIT_OK
        a = (serial / "summary.csv").read_text()
        b = (parallel / "summary.csv").read_text()
        assert a == b


class TestOracle:
    def test_scan_artifact(self, tmp_path, capsys):
        code = cli.main(["oracle", _case("unbalanced4"), "--problems", "P1",
                         "--grid-points", "5", "--out", str(tmp_path)])
        assert code == cli.EXIT_OK
        doc = json.loads((tmp_path / "oracle.json").read_text())
        rec = next(r for r in doc if r["problem"] == "P1")
        assert rec["objective"] > 0
        assert len(rec["q_kvar"]) == 2
        assert rec["failed"] == 0


class TestReport:
    def test_comparison_table_from_run_outputs(self, tmp_path, capsys):
        out = tmp_path / "runout"
        assert cli.main(["run", _case("ieee13_mod"), "--problems", "P1,P2",
                         "--out", str(out), "--tol", "1e-6"]) == cli.EXIT_OK
        rep = tmp_path / "rep"
        assert cli.main(["report", str(out), "--out", str(rep)]) == cli.EXIT_OK
        with open(rep / "comparison.csv", newline="") as fh:
            rows = list(csv.DictReader(fh))
        assert [r["Problem"] for r in rows] == ["P1", "P2"]

        with open(rep / "per_bus_P1.csv", newline="") as fh:
            per_bus = list(csv.DictReader(fh))
        by_bus = {r["bus"]: r for r in per_bus}
        # single-phase buses carry no three-phase unbalance metrics
        assert by_bus["611"]["VUF [%]"] == ""
        assert by_bus["611"]["V_a"] == ""
        assert by_bus["675"]["VUF [%]"] != ""
        assert by_bus["675"]["V_a"] != ""

    def test_empty_directory_is_input_error(self, tmp_path):
        assert cli.main(["report", str(tmp_path)]) == cli.EXIT_INPUT


class TestMisc:
    def test_version_flag(self, capsys):
        assert cli.main(["--version"]) == 0
        assert capsys.readouterr().out.startswith("tpopf ")

    def test_no_subcommand_is_usage_error(self, capsys):
        assert cli.main([]) == 2

    def test_problem_range_parsing(self):
        assert cli._parse_problems("P1..P3") == ["P1", "P2", "P3"]
        assert cli._parse_problems("P0_pf,P2") == ["P0_pf", "P2"]
        assert cli._parse_problems("P2,P2,P1") == ["P2", "P1"]
        with pytest.raises(ValueError):
            cli._parse_problems("P1..")
        with pytest.raises(ValueError):
            cli._parse_problems("banana")
