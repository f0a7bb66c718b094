"""End-to-end tests of the command-line interface, run in process."""

import json

import numpy as np
import pytest

from bbpc.cli import main
from bbpc.cost_analysis import cost_report_from_json

HOT_CONFIG = (
    "kappa = 17.77\nk1 = 5.819e7\nk2 = -8.99e5\nphi1 = 1.0\nphi2 = 1.0\n"
    "n_bar = 1.0\nu1_max = 1.798\nu2_max = 5.0\n"
)


def run(capsys, *argv):
    code = main(list(argv))
    captured = capsys.readouterr()
    return code, captured.out, captured.err


class TestModelInfo:
    def test_human_report(self, capsys):
        code, out, err = run(capsys, "model-info")
        assert code == 0 and err == ""
        assert "optimal bang-bang controls need at most 4 switchings per period" in out
        assert "D = 0.654791" in out
        assert "-0.566151" in out  # heating steady state, first coordinate
        assert "0.689939" in out  # cooling steady state, first coordinate

    @pytest.mark.xfail(
        strict=True,
        reason="published discriminant value 2.36 is not reproduced; "
        "recomputation from the published parameters gives 0.6548",
    )
    def test_echoes_published_discriminant(self, capsys):
        _, out, _ = run(capsys, "model-info")
        assert "2.36" in out

    def test_json_parses_and_is_deterministic(self, capsys):
        code, out1, _ = run(capsys, "model-info", "--format", "json")
        assert code == 0
        code, out2, _ = run(capsys, "model-info", "--format", "json")
        assert out1 == out2
        doc = json.loads(out1)
        assert doc["switching_discriminant"] == pytest.approx(0.65479140189481733, rel=1e-15)
        assert doc["at_most_four_switchings"] is True
        assert doc["parameters"]["kappa"] == 17.77
        assert doc["equilibria_u2_plus"][0][0] == pytest.approx(-0.5661506975461541, abs=1e-10)
        assert doc["origin_jacobian_det"] == pytest.approx(1.8091918202100263, rel=1e-13)


class TestDesign:
    def test_two_window_example(self, capsys):
        code, out, _ = run(capsys, "design", "--N", "2", "--tau", "1", "--format", "json")
        assert code == 0
        report = cost_report_from_json(out)
        assert report.kind == "N2" and report.tau == 1.0 and report.alphas == ()
        assert report.J == pytest.approx(-0.032951814350048243, rel=1e-10)
        assert report.J_est == pytest.approx(-0.066232688387825978, rel=1e-10)
        # published cost for this design
        assert report.J == pytest.approx(-0.03385, abs=1e-3)

    def test_three_window_example(self, capsys):
        code, out, _ = run(
            capsys, "design", "--N", "3", "--tau", "1", "--alpha2", "0.4", "--format", "json"
        )
        assert code == 0
        report = cost_report_from_json(out)
        assert report.kind == "N3" and report.alphas == (0.4,)
        assert report.J_est is None
        assert report.J == pytest.approx(-0.48241295139077545, rel=1e-8)
        assert report.J == pytest.approx(-0.482341, abs=1e-3)

    def test_four_window_example(self, capsys):
        code, out, _ = run(
            capsys, "design", "--N", "4", "--tau", "1",
            "--alpha2", "0.1", "--alpha4", "0.1", "--format", "json",
        )
        assert code == 0
        report = cost_report_from_json(out)
        assert report.alphas == (0.1, 0.1)
        assert report.J == pytest.approx(-0.024881338866582059, rel=1e-10)
        assert report.J == pytest.approx(-0.02497, abs=1e-3)

    def test_human_output_mentions_windows_and_residual(self, capsys):
        code, out, _ = run(capsys, "design", "--N", "2", "--tau", "0.5")
        assert code == 0
        assert "windows:" in out
        assert "closure residual" in out
        assert "J     =" in out and "J_est =" in out

    def test_alpha_validation(self, capsys):
        code, _, err = run(capsys, "design", "--N", "3", "--tau", "1")
        assert code == 2 and "--alpha2" in err
        code, _, err = run(capsys, "design", "--N", "2", "--tau", "1", "--alpha2", "0.3")
        assert code == 2 and "do not apply" in err
        code, _, err = run(capsys, "design", "--N", "4", "--tau", "1", "--alpha2", "0.3")
        assert code == 2 and "--alpha4" in err
        code, _, err = run(
            capsys, "design", "--N", "3", "--tau", "1", "--alpha2", "0.6"
        )
        assert code == 2 and "alpha2" in err

    def test_trajectory_sidecar(self, capsys, tmp_path):
        path = tmp_path / "orbit.csv"
        code, _, _ = run(
            capsys, "design", "--N", "2", "--tau", "0.5", "--traj-out", str(path),
            "--format", "json",
        )
        assert code == 0
        lines = path.read_text().splitlines()
        assert lines[0] == "t,x1,x2,u1,u2"
        first = lines[1].split(",")
        assert float(first[0]) == 0.0
        assert float(first[3]) == pytest.approx(1.798)

    def test_missing_model_config(self, capsys, tmp_path):
        code, _, err = run(
            capsys, "design", "--model", str(tmp_path / "nope.cfg"), "--N", "2", "--tau", "1"
        )
        assert code == 2 and "error:" in err and "hydrolysis" in err

    def test_numerical_failure_exit_code(self, capsys, tmp_path):
        # raising the temperature modulation bound far beyond the model's
        # domain drives x2 below -1 during integration
        cfg = tmp_path / "hot.cfg"
        cfg.write_text(HOT_CONFIG)
        code, _, err = run(
            capsys, "design", "--model", str(cfg), "--N", "2", "--tau", "1"
        )
        assert code == 3
        assert err.startswith("numerical failure:")


class TestTable:
    def test_csv_shape_and_anomaly_flag(self, capsys):
        code, out, _ = run(capsys, "table1", "--format", "csv")
        assert code == 0
        lines = out.splitlines()
        assert len(lines) == 11
        assert lines[0] == (
            "tau,x0_1,x0_2,J,J_est,ref_dev_x0,ref_dev_J,ref_dev_J_est,anomalous_ref_J_est"
        )
        flags = {float(row.split(",")[0]): row.split(",")[-1] for row in lines[1:]}
        assert flags[0.4] == "1"
        assert all(v == "0" for k, v in flags.items() if k != 0.4)

    def test_csv_is_deterministic(self, capsys):
        _, out1, _ = run(capsys, "table1", "--format", "csv")
        _, out2, _ = run(capsys, "table1", "--format", "csv")
        assert out1 == out2

    def test_human_marks_anomalous_row(self, capsys):
        code, out, _ = run(capsys, "table1")
        assert code == 0
        marked = [ln for ln in out.splitlines() if ln.endswith(" *")]
        assert len(marked) == 1 and marked[0].lstrip().startswith("0.4")
        assert "anomalous" in out


class TestSweep:
    def test_period_ladder_statuses(self, capsys):
        code, out, _ = run(capsys, "sweep", "--N", "2", "--tau", "0.3,0.5")
        assert code == 0
        items = json.loads(out)
        assert [it["status"] for it in items] == ["ok", "ok"]
        assert [it["tau"] for it in items] == [0.3, 0.5]
        assert all(it["J"] < 0 for it in items)

    def test_empty_period_list(self, capsys):
        code, out, _ = run(capsys, "sweep", "--N", "2", "--tau", "")
        assert code == 0
        assert json.loads(out) == []

    def test_three_window_sweep_rejected(self, capsys):
        code, _, err = run(capsys, "sweep", "--N", "3", "--tau", "0.5")
        assert code == 2 and "N=2 and N=4" in err

    def test_bad_tau_list(self, capsys):
        code, _, err = run(capsys, "sweep", "--N", "2", "--tau", "0.5,fast")
        assert code == 2 and "bad --tau list" in err

    def test_all_failed_items_exit_code(self, capsys, tmp_path):
        # the solver failure is recorded per item, the sweep completes, and
        # only the exit code reports that nothing converged
        cfg = tmp_path / "hot.cfg"
        cfg.write_text(HOT_CONFIG)
        code, out, _ = run(
            capsys, "sweep", "--model", str(cfg), "--N", "2", "--tau", "1"
        )
        assert code == 3
        items = json.loads(out)
        assert [it["status"] for it in items] == ["failed"]
        assert "x2 <= -1" in items[0]["message"]

    def test_alpha_grid_values_and_margins(self, capsys):
        code, out, _ = run(capsys, "sweep", "--N", "4", "--alpha-grid", "2")
        assert code == 0
        items = json.loads(out)
        assert len(items) == 4
        got = {(it["alpha2"], it["alpha4"]): it["cbar"] for it in items}
        expected = {
            (0.125, 0.125): -0.040769015500604806,
            (0.125, 0.375): 0.32690833234035827,
            (0.375, 0.125): 0.052947370903465241,
            (0.375, 0.375): 0.40270429944353342,
        }
        for key, want in expected.items():
            assert got[key] == pytest.approx(want, abs=1e-12)
        for it in items:
            assert it["cstar"] == pytest.approx(-0.14133397769001316, abs=1e-12)
            assert it["margin"] > 0.0
            assert it["margin"] == pytest.approx(it["cbar"] - it["cstar"], abs=1e-15)

    def test_alpha_grid_accepts_unused_tau(self, capsys):
        # the documented invocation passes --tau alongside --alpha-grid; the
        # coefficient does not depend on the period, so it must be accepted
        code, out, _ = run(capsys, "sweep", "--N", "4", "--tau", "1", "--alpha-grid", "2")
        assert code == 0
        assert len(json.loads(out)) == 4

    def test_threading_is_exact_and_env_validated(self, capsys, monkeypatch):
        _, plain, _ = run(capsys, "sweep", "--N", "4", "--alpha-grid", "2")
        monkeypatch.setenv("BBPC_THREADS", "2")
        _, threaded, _ = run(capsys, "sweep", "--N", "4", "--alpha-grid", "2")
        assert threaded == plain
        monkeypatch.setenv("BBPC_THREADS", "abc")
        code, _, err = run(capsys, "sweep", "--N", "4", "--alpha-grid", "2")
        assert code == 2 and "BBPC_THREADS" in err
        monkeypatch.setenv("BBPC_THREADS", "0")
        code, _, err = run(capsys, "sweep", "--N", "4", "--alpha-grid", "2")
        assert code == 2 and "BBPC_THREADS" in err


class TestTrajectory:
    def test_csv_covers_one_period(self, capsys):
        code, out, _ = run(capsys, "trajectory", "--N", "2", "--tau", "0.5")
        assert code == 0
        lines = out.splitlines()
        assert lines[0] == "t,x1,x2,u1,u2"
        t = np.array([float(row.split(",")[0]) for row in lines[1:]])
        assert t[0] == 0.0 and t[-1] == pytest.approx(0.5)
        assert np.all(np.diff(t) > 0)
        u1 = np.array([float(row.split(",")[3]) for row in lines[1:]])
        assert set(np.round(np.abs(u1), 3)) == {1.798}
        assert u1[0] > 0 > u1[-1]


class TestOutputPlumbing:
    def test_out_file_and_stamp_sidecar(self, capsys, tmp_path):
        out_path = tmp_path / "report.json"
        code, stdout, _ = run(
            capsys, "design", "--N", "2", "--tau", "0.5", "--format", "json",
            "--out", str(out_path), "--stamp",
        )
        assert code == 0 and stdout == ""
        stamp = (tmp_path / "report.json.stamp").read_text().splitlines()
        assert stamp[0].startswith("bbpc ")
        assert stamp[1].startswith("command: bbpc design")
        assert stamp[2].startswith("generated: ")
        # the stamp never contaminates the data stream
        _, plain, _ = run(capsys, "design", "--N", "2", "--tau", "0.5", "--format", "json")
        assert out_path.read_text() == plain

    def test_stamp_to_stderr_for_stdout_output(self, capsys):
        code, out, err = run(capsys, "model-info", "--stamp")
        assert code == 0
        assert err.startswith("bbpc ")
        assert "command: bbpc model-info --stamp" in err

    def test_version_flag(self, capsys):
        with pytest.raises(SystemExit) as exc:
            main(["--version"])
        assert exc.value.code == 0
        assert capsys.readouterr().out.startswith("bbpc ")

    def test_missing_required_arguments_exit_2(self, capsys):
        with pytest.raises(SystemExit) as exc:
            main(["design"])
        assert exc.value.code == 2
