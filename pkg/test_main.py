import csv
import io
import json
from pathlib import Path

import pytest

from main import EXIT_BUDGET, EXIT_INTERNAL, EXIT_OK, EXIT_PARAMETER, run
from ssa import SsaInstance, generate_instance, write_population_json

RULING = str(Path(__file__).parent / "instances" / "quadric_ruling.json")
QUIET = ["--no-progress"]


def run_json(capsys, *argv):
    code = run([*argv, "--format", "json", *QUIET])
    assert code == EXIT_OK
    return json.loads(capsys.readouterr().out)


class TestDims:
    def test_json_report(self, capsys):
        report = run_json(capsys, "dims", "--n", "3", "--k", "1")
        assert report["delta"] == -2
        assert report["identifiable"] is True
        assert [row["expected_dim"] for row in report["rows"]] == [-2, -1, 0]
        assert report["epoch_thresholds"]["delta_based"] == 2
        assert report["provenance"]["command"] == "dims"

    def test_table(self, capsys):
        assert run(["dims", "--n", "4", "--k", "1", "--format", "table", *QUIET]) == EXIT_OK
        out = capsys.readouterr().out
        assert "delta: 0" in out
        assert "k_prime" in out
        assert "provenance" not in out

    def test_csv(self, capsys):
        assert run(["dims", "--n", "4", "--k", "1", "--format", "csv", *QUIET]) == EXIT_OK
        rows = list(csv.DictReader(io.StringIO(capsys.readouterr().out)))
        assert [row["k_prime"] for row in rows] == ["-1", "0", "1"]

    def test_rank_constrained_quadrics(self, capsys):
        report = run_json(capsys, "dims", "--n", "5", "--k", "1", "--degrees", "2,2,2", "--rank", "4")
        assert report["delta"] == -1
        assert report["identifiable"] is True

    def test_cubic_has_no_epoch_thresholds(self, capsys):
        report = run_json(capsys, "dims", "--n", "3", "--k", "1", "--degrees", "3")
        assert report["delta"] == 0
        assert "epoch_thresholds" not in report


class TestInstances:
    def test_tangent_on_ruling(self, capsys):
        report = run_json(capsys, "tangent", "--instance", RULING, "--show-matrix")
        assert (report["rank"], report["tangent_dim"], report["delta"]) == (3, 1, 1)
        assert report["classification"] == "expected_dim_met"
        assert report["columns"] == ["X0,2", "X0,3", "X1,2", "X1,3"]

    def test_census_on_ruling(self, capsys):
        report = run_json(capsys, "census", "--instance", RULING, "--q", "3")
        assert report["count"] == 8
        assert report["strata"] == {"-1": 3, "0": 4, "1": 1}

    def test_gen_then_tangent(self, tmp_path, capsys):
        path = tmp_path / "instance.json"
        assert run(["gen", "--n", "4", "--k", "1", "--seed", "3", "--bound", "50", "--verify",
                    "--format", "json", "--output", str(path), *QUIET]) == EXIT_OK
        report = run_json(capsys, "tangent", "--instance", str(path))
        assert report["tangent_dim"] == 0
        assert report["classification"] == "expected_dim_met"

    def test_gen_is_reproducible(self, tmp_path):
        outputs = []
        for name in ("a.json", "b.json"):
            path = tmp_path / name
            assert run(["gen", "--n", "3", "--k", "1", "--degrees", "2,3", "--seed", "7", "--generic-plane",
                        "--format", "json", "--output", str(path), *QUIET]) == EXIT_OK
            outputs.append(path.read_bytes())
        assert outputs[0] == outputs[1]

    def test_gen_over_prime_field(self, capsys):
        report = run_json(capsys, "gen", "--n", "3", "--k", "1", "--field", "prime:11", "--as-gram")
        assert report["field"] == {"kind": "prime", "p": 11}
        assert "gram" in report["forms"][0]


class TestSweeps:
    def test_census_sweep(self, capsys):
        report = run_json(capsys, "census", "--n", "3", "--k", "1", "--q", "5", "--trials", "3", "--bound", "50")
        assert report["total"] == 3
        assert len(report["rows"]) == 3

    def test_tangent_sweep(self, capsys):
        report = run_json(capsys, "tangent", "--n", "3", "--k", "1", "--trials", "5")
        assert report["claim"] == "unique plane"
        assert report["passed"] >= 4


class TestSsaCommands:
    def test_report_flags_discrepancy(self, capsys):
        report = run_json(capsys, "ssa-report", "--n", "5", "--k", "1", "--s", "3")
        assert report["delta"] == -1
        assert report["identifiable"] is True
        assert report["discrepancy_flag"] is True

    def test_generate_then_recover(self, tmp_path, capsys):
        path = tmp_path / "population.json"
        assert run(["ssa-gen", "--n", "5", "--k", "1", "--s", "3", "--seed", "2",
                    "--format", "json", "--output", str(path), *QUIET]) == EXIT_OK
        report = run_json(capsys, "ssa-recover", "--instance", str(path), "--restarts", "10")
        assert report["clusters"] >= 1
        assert report["rows"][0]["chordal_to_truth"] < 1e-6

    def test_tolerance_reaches_the_reduction(self, tmp_path, capsys):
        path = tmp_path / "population.json"
        assert run(["ssa-gen", "--n", "5", "--k", "1", "--s", "3", "--seed", "2",
                    "--format", "json", "--output", str(path), *QUIET]) == EXIT_OK
        strict = run_json(capsys, "ssa-recover", "--instance", str(path), "--restarts", "5", "--tolerance", "1e-8")
        loose = run_json(capsys, "ssa-recover", "--instance", str(path), "--restarts", "5", "--tolerance", "2")
        assert strict["diagnostics"]["effective_n"] == 2
        assert loose["diagnostics"]["effective_n"] == 5
        assert loose["provenance"]["parameters"]["tolerance"] == 2.0

    def test_identifiability_counts_surviving_quadrics(self, tmp_path, capsys):
        instance = generate_instance(5, 1, 3, rng=2)
        padded = SsaInstance(instance.epochs + [instance.epochs[0]], instance.ground_truth)
        path = tmp_path / "padded.json"
        write_population_json(path, padded)
        report = run_json(capsys, "ssa-recover", "--instance", str(path), "--restarts", "5")
        assert report["diagnostics"]["dropped"] == ["linear 4", "quadric 4"]
        assert report["identifiability"]["s"] == 3

    def test_samples_on_disk(self, tmp_path, capsys):
        folder = tmp_path / "epochs"
        assert run(["ssa-gen", "--n", "4", "--k", "1", "--s", "2", "--samples", "500",
                    "--samples-dir", str(folder), "--format", "json", "--output", str(tmp_path / "pop.json"),
                    *QUIET]) == EXIT_OK
        files = sorted(str(p) for p in folder.glob("epoch_*.csv"))
        assert len(files) == 3
        report = run_json(capsys, "ssa-recover", "--epochs", *files, "--k", "1", "--restarts", "5",
                          "--residual-tolerance", "1e-2")
        assert "diagnostics" in report


class TestExitCodes:
    def test_missing_arguments(self):
        assert run(["dims", "--n", "3", *QUIET]) == EXIT_PARAMETER

    def test_argparse_errors(self):
        assert run(["no-such-command"]) == EXIT_PARAMETER
        assert run(["ssa-report", "--n", "3", "--k", "1"]) == EXIT_PARAMETER

    def test_single_quadric(self):
        assert run(["dims", "--n", "3", "--k", "1", "--degrees", "2", *QUIET]) == EXIT_PARAMETER

    def test_rank_with_mixed_degrees(self):
        argv = ["dims", "--n", "4", "--k", "1", "--degrees", "2,3", "--rank", "4", *QUIET]
        assert run(argv) == EXIT_PARAMETER

    def test_rank_below_regime(self):
        assert run(["ssa-report", "--n", "5", "--k", "1", "--s", "3", "--rank", "3", *QUIET]) == EXIT_PARAMETER

    def test_budget(self):
        code = run(["census", "--n", "4", "--k", "1", "--q", "11", "--trials", "1", "--budget", "1000",
                    "--bound", "50", *QUIET])
        assert code == EXIT_BUDGET

    def test_plane_not_on_the_forms(self, tmp_path):
        data = json.loads(Path(RULING).read_text())
        data["plane"] = [[1, 0, 1, 0], [0, 1, 0, 0]]
        path = tmp_path / "broken.json"
        path.write_text(json.dumps(data))
        assert run(["tangent", "--instance", str(path), *QUIET]) == EXIT_INTERNAL

    def test_unreadable_instance(self, tmp_path):
        assert run(["tangent", "--instance", str(tmp_path / "missing.json"), *QUIET]) == EXIT_PARAMETER

    @pytest.mark.parametrize("argv", [
        ["census", "--n", "3", "--k", "1", "--trials", "2"],
        ["ssa-recover", "--k", "1"],
    ])
    def test_incomplete_requests(self, argv):
        assert run([*argv, *QUIET]) == EXIT_PARAMETER
