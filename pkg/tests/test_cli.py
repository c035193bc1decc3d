"""
Command-line surface: exit codes, error messages and written files

"""
import json

import pytest

from lpreach.api.cli import main
from lpreach.models.schemas import BenchReport, RunSummary, SolutionDocument, SolverStatus
from lpreach.utils.io import ResultWriter

FEASIBLE = '{"c": [-1.0, -2.0], "A_ub": [[1.0, 1.0]], "b_ub": [1.0]}'
INFEASIBLE = '{"c": [1.0, 1.0], "A_ub": [[1.0, 1.0]], "b_ub": [-1.0]}'
UNBOUNDED = '{"c": [-1.0], "A_ub": [[-1.0]], "b_ub": [0.0]}'
DUPLICATED = (
    '{"c": [1.0, 2.0], "A_eq": [[1.0, 1.0], [1.0, 1.0]], "b_eq": [1.0, 1.0],'
    ' "A_ub": [[1.0, 0.0]], "b_ub": [5.0]}'
)


class TestSolve:
    def test_success_to_stdout(self, write_json, capsys):
        path = write_json("lp.json", FEASIBLE)
        assert main(["solve", str(path)]) == 0
        doc = SolutionDocument.model_validate_json(capsys.readouterr().out)
        assert doc.status == SolverStatus.SUCCESS
        assert doc.x == pytest.approx([0.0, 1.0])
        assert doc.fun == pytest.approx(-2.0)

    def test_out_file(self, write_json, tmp_path):
        path = write_json("lp.json", FEASIBLE)
        out = tmp_path / "result" / "solution.json"
        assert main(["solve", str(path), "--out", str(out)]) == 0
        doc = ResultWriter.read_json(out, SolutionDocument)
        assert doc.success and doc.feasible and doc.bounded
        assert not doc.hit_iteration_cap
        assert len(doc.basis) == 1

    @pytest.mark.parametrize("text,code,label", [
        (INFEASIBLE, 2, SolverStatus.INFEASIBLE),
        (UNBOUNDED, 3, SolverStatus.UNBOUNDED),
    ])
    def test_failure_codes(self, write_json, tmp_path, text, code, label):
        path = write_json("lp.json", text)
        out = tmp_path / "solution.json"
        assert main(["solve", str(path), "--out", str(out)]) == code
        doc = ResultWriter.read_json(out, SolutionDocument)
        assert doc.status == label
        assert not doc.success
        assert doc.fun == 0.0
        assert all(v == 0.0 for v in doc.x)

    def test_duplicated_rows(self, write_json, tmp_path):
        path = write_json("lp.json", DUPLICATED)
        out = tmp_path / "solution.json"
        assert main(["solve", str(path), "--out", str(out)]) == 0
        doc = ResultWriter.read_json(out, SolutionDocument)
        assert doc.x == pytest.approx([1.0, 0.0])
        assert doc.fun == pytest.approx(1.0)

    def test_syntax_error_reports_line(self, write_json, capsys):
        path = write_json("bad.json", '{\n  "c": [1.0,\n  ]\n}\n')
        assert main(["solve", str(path)]) == 1
        assert f"{path}:3:" in capsys.readouterr().err

    def test_validation_error_reports_field(self, write_json, capsys):
        path = write_json("extra.json", '{\n  "c": [1.0],\n  "A_ub": [[1.0]],\n  "b_ub": [1.0],\n  "bogus": 1\n}\n')
        assert main(["solve", str(path)]) == 1
        assert f"{path}:5: bogus:" in capsys.readouterr().err

    def test_dimension_mismatch(self, write_json, capsys):
        path = write_json("shape.json", '{"c": [1.0, 2.0], "A_ub": [[1.0]], "b_ub": [1.0]}')
        assert main(["solve", str(path)]) == 1
        assert str(path) in capsys.readouterr().err

    def test_missing_file(self, tmp_path, capsys):
        assert main(["solve", str(tmp_path / "nope.json")]) == 1
        assert "io_error" in capsys.readouterr().err


class TestUsage:
    def test_unknown_command(self, capsys):
        assert main(["frobnicate"]) == 1
        assert "usage" in capsys.readouterr().err

    def test_missing_command(self):
        assert main([]) == 1

    def test_bad_flag_value(self):
        assert main(["bench-lp", "--n", "many"]) == 1


class TestNudgeCommand:
    def test_safe_input_needs_no_iterations(self, scenario_dir, tmp_path):
        out = tmp_path / "safe"
        assert main(["bicycle-nudge", "--config", str(scenario_dir / "toy_safe.json"), "--out", str(out)]) == 0
        summary = ResultWriter.read_json(out / "summary.json", RunSummary)
        assert summary.converged
        assert summary.iterations == 0
        assert summary.safety_value == 0.0

        u_ff = ResultWriter.read_table(out / "u_ff.csv")
        assert list(u_ff.columns) == ["u0"]
        assert len(u_ff) == 20
        assert (u_ff["u0"] == 0.5).all()
        assert len(ResultWriter.read_table(out / "safety.csv")) == 1
        assert (out / "tube.svg").exists()

    def test_unsafe_toy_converges(self, scenario_dir, tmp_path):
        out = tmp_path / "unsafe"
        assert main(["bicycle-nudge", "--config", str(scenario_dir / "toy_unsafe.json"), "--out", str(out)]) == 0
        summary = ResultWriter.read_json(out / "summary.json", RunSummary)
        assert summary.converged
        assert summary.iterations >= 1
        trajectory = ResultWriter.read_table(out / "trajectory.csv")
        assert (trajectory["obstacle_bound"] <= 0.0).all()

    def test_zero_budget_is_not_converged(self, scenario_dir, tmp_path):
        out = tmp_path / "budget"
        args = ["bicycle-nudge", "--config", str(scenario_dir / "toy_unsafe.json"), "--max-iters", "0", "--out", str(out)]
        assert main(args) == 4
        assert not ResultWriter.read_json(out / "summary.json", RunSummary).converged

    def test_invalid_scenario(self, write_json, tmp_path, capsys):
        path = write_json("toy.json", json.dumps({
            "system": "toy", "initial_lo": [1.0], "initial_hi": [0.0], "dt": 0.1, "T": 1.0,
        }))
        assert main(["bicycle-nudge", "--config", str(path), "--out", str(tmp_path)]) == 1
        assert str(path) in capsys.readouterr().err


class TestReachCommand:
    def test_vdp_short_run(self, tmp_path):
        out = tmp_path / "vdp"
        assert main(["vdp", "--tf", "0.1", "--samples", "20", "--out", str(out)]) == 0
        summary = ResultWriter.read_json(out / "summary.json", RunSummary)
        assert summary.steps == 10
        assert summary.refine
        assert not summary.order_violation
        assert not summary.enclosure_failed
        assert summary.samples == 24  # 4 box corners + 20 uniform samples
        assert summary.samples_outside == 0

        trajectory = ResultWriter.read_table(out / "trajectory.csv")
        assert len(trajectory) == 11
        assert list(trajectory.columns)[:2] == ["t", "y_lo_0"]
        assert (trajectory.filter(like="y_hi").to_numpy() >= trajectory.filter(like="y_lo").to_numpy()).all()
        assert (out / "tube.svg").exists()

    def test_vdp_from_config_without_refinement(self, scenario_dir, tmp_path):
        out = tmp_path / "plain"
        assert main(["vdp", "--config", str(scenario_dir / "vanderpol.json"), "--no-refine", "--out", str(out)]) == 0
        summary = ResultWriter.read_json(out / "summary.json", RunSummary)
        assert not summary.refine
        assert summary.t_final == pytest.approx(0.628)


class TestBenchCommands:
    def test_bench_lp(self, tmp_path, capsys):
        out = tmp_path / "bench"
        assert main(["bench-lp", "--n", "4", "--m-ub", "3", "--samples", "3", "--out", str(out)]) == 0
        report = ResultWriter.read_json(out / "bench.json", BenchReport)
        assert report.sample_size == 3
        row = (out / "table_row.md").read_text(encoding="utf-8").strip()
        assert row == report.table_row()
        assert row in capsys.readouterr().out

    def test_bench_reach(self, tmp_path):
        out = tmp_path / "bench_reach"
        assert main(["bench-reach", "--tf", "0.05", "--samples", "1", "--out", str(out)]) == 0
        report = ResultWriter.read_json(out / "bench.json", BenchReport)
        assert report.metrics["steps"] == 5.0
        assert "bound_size" in report.metrics
