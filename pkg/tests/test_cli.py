import json
import math
import shutil
import subprocess
import sys

import numpy as np
import pytest
from conftest import simple_scenario

from lhcalib.cli import EXIT_COVERAGE, EXIT_INPUT, EXIT_OK, EXIT_STAGE, main
from lhcalib.forward_model import EXAMPLE_INTRINSICS, save_intrinsics
from lhcalib.geometry import Pose6DoF
from lhcalib.pipeline import REPORT_COLUMNS, CalibrationResult, calibrate
from lhcalib.pulses import CSV_HEADER, read_pulse_csv
from lhcalib.simulator import QUANTIZATION_ONLY, save_scenario


@pytest.fixture(scope="module")
def sim_dir(tmp_path_factory):
    d = tmp_path_factory.mktemp("sim")
    save_scenario(simple_scenario("half_circle", speed=0.3, duration=3.0, noise=QUANTIZATION_ONLY), d / "scenario.json")
    assert main(["simulate", "--scenario", str(d / "scenario.json"), "--seed", "5", "--out", str(d)]) == EXIT_OK
    return d


@pytest.fixture(scope="module")
def calib_dir(sim_dir, tmp_path_factory):
    out = tmp_path_factory.mktemp("cal")
    code = main(["--deterministic", "calibrate", str(sim_dir / "master.csv"), str(sim_dir / "slave.csv"), "--out", str(out), "--emit-plots"])
    assert code == EXIT_OK
    return out


class TestSimulate:
    def test_writes_three_files(self, sim_dir):
        for name in ("master.csv", "slave.csv", "truth.json"):
            assert (sim_dir / name).is_file()
        assert (sim_dir / "master.csv").read_text().startswith(CSV_HEADER)
        truth = json.loads((sim_dir / "truth.json").read_text())
        assert truth["schema"] == "lhcalib-truth v1" and truth["seed"] == 5

    def test_same_seed_identical(self, sim_dir, tmp_path):
        assert main(["simulate", "--scenario", str(sim_dir / "scenario.json"), "--seed", "5", "--out", str(tmp_path)]) == 0
        for name in ("master.csv", "slave.csv", "truth.json"):
            assert (tmp_path / name).read_bytes() == (sim_dir / name).read_bytes()

    def test_random_scenario(self, tmp_path):
        code = main(["simulate", "--seed", "3", "--kind", "static", "--noiseless", "--out", str(tmp_path)])
        assert code == EXIT_OK
        truth = json.loads((tmp_path / "truth.json").read_text())
        assert truth["scenario"]["trajectory"]["kind"] == "static"
        assert truth["scenario"]["noise"]["quantization"] is False

    def test_missing_geometry(self, tmp_path, capsys):
        code = main(["simulate", "--geometry", str(tmp_path / "nope.json"), "--out", str(tmp_path)])
        assert code == EXIT_INPUT
        assert "nope.json" in capsys.readouterr().err

    def test_coverage_failure(self, tmp_path):
        save_scenario(simple_scenario("line", speed=2.0, duration=8.0), tmp_path / "sc.json")
        assert main(["simulate", "--scenario", str(tmp_path / "sc.json"), "--out", str(tmp_path)]) == EXIT_COVERAGE

    def test_intrinsics_given_twice(self, sim_dir, tmp_path):
        save_intrinsics(EXAMPLE_INTRINSICS, tmp_path / "a.json")
        code = main(
            ["--intrinsics", str(tmp_path / "a.json"), "simulate", "--scenario", str(sim_dir / "scenario.json"),
             "--intrinsics", str(tmp_path / "a.json"), "--out", str(tmp_path)]
        )
        assert code == EXIT_OK
        sc = json.loads((tmp_path / "truth.json").read_text())["scenario"]
        assert sc["slave_intrinsics"]["azimuth_laser_offset_m"] == list(EXAMPLE_INTRINSICS.azimuth_laser_offset)


class TestDecodeReconstruct:
    def test_decode(self, sim_dir, tmp_path):
        assert main(["decode", str(sim_dir / "master.csv"), "--out", str(tmp_path)]) == EXIT_OK
        doc = json.loads((tmp_path / "master.records.json").read_text())
        assert doc["schema"] == "lhcalib-records v1"
        rec = next(r for r in doc["records"] if r["angles_deg"])
        assert all(abs(a) <= 61.0 for a in rec["angles_deg"].values())

    @pytest.mark.parametrize("strategy", ["full", "dominant", "merge"])
    def test_reconstruct(self, sim_dir, tmp_path, strategy):
        assert main(["--reconstruct", strategy, "reconstruct", str(sim_dir / "slave.csv"), "--out", str(tmp_path)]) == 0
        doc = json.loads((tmp_path / "slave.frames.json").read_text())
        assert doc["strategy"] == strategy
        assert doc["frames"] and all(f["station"] == "slave" for f in doc["frames"])

    def test_bad_row_names_line(self, tmp_path, capsys):
        (tmp_path / "bad.csv").write_text(CSV_HEADER + "\n0,10,30\n1,x,40\n")
        assert main(["decode", str(tmp_path / "bad.csv"), "--out", str(tmp_path)]) == EXIT_INPUT
        assert ":3:" in capsys.readouterr().err


class TestCalibrate:
    def test_outputs(self, calib_dir, sim_dir):
        res = CalibrationResult.from_dict(json.loads((calib_dir / "result.json").read_text()))
        # same files through the library API: the CLI adds nothing of its own
        lib = calibrate(read_pulse_csv(sim_dir / "master.csv"), read_pulse_csv(sim_dir / "slave.csv"))
        np.testing.assert_allclose(res.slave_pose.as_vector(), lib.slave_pose.as_vector(), atol=1e-9)
        summary = (calib_dir / "summary.txt").read_text()
        assert "final" in summary and "wall time" not in summary
        for name in ("path_master.csv", "path_slave.csv", "path_master_aligned.csv", "paths.svg"):
            assert (calib_dir / name).is_file()

    def test_deterministic_rerun(self, calib_dir, sim_dir, tmp_path):
        main(["--deterministic", "calibrate", str(sim_dir / "master.csv"), str(sim_dir / "slave.csv"), "--out", str(tmp_path)])
        assert (tmp_path / "result.json").read_bytes() == (calib_dir / "result.json").read_bytes()
        assert (tmp_path / "summary.txt").read_bytes() == (calib_dir / "summary.txt").read_bytes()

    def test_corrupted_csv(self, sim_dir, tmp_path, capsys):
        lines = (sim_dir / "master.csv").read_text().split("\n")
        lines[5] = "3,oops"
        (tmp_path / "m.csv").write_text("\n".join(lines))
        code = main(["calibrate", str(tmp_path / "m.csv"), str(sim_dir / "slave.csv"), "--out", str(tmp_path)])
        assert code == EXIT_INPUT
        assert ":6:" in capsys.readouterr().err

    def test_stage_failure(self, sim_dir, tmp_path, capsys):
        (tmp_path / "empty.csv").write_text(CSV_HEADER + "\n")
        code = main(["calibrate", str(sim_dir / "master.csv"), str(tmp_path / "empty.csv"), "--out", str(tmp_path)])
        assert code == EXIT_STAGE
        assert "slave_decode" in capsys.readouterr().err


def _result_file(path, pose):
    path.write_text(json.dumps(CalibrationResult(pose, pose, 0.0).to_dict()))


class TestEvaluate:
    def test_perfect_results(self, sim_dir, tmp_path):
        truth = Pose6DoF.from_dict(json.loads((sim_dir / "truth.json").read_text())["relative_slave_pose"])
        for k in range(5):
            _result_file(tmp_path / f"r{k}.json", truth)
        out = tmp_path / "ev"
        assert main(["evaluate", str(tmp_path / "r*.json"), "--truth", str(sim_dir / "truth.json"), "--out", str(out)]) == 0
        rows = (out / "evaluation.csv").read_text().strip().split("\n")
        assert rows[0].split(",") == ["metric", *REPORT_COLUMNS]
        for row in rows[1:]:
            assert all(float(v) == 0.0 for v in row.split(",")[1:])

    def test_hand_computed(self, sim_dir, tmp_path):
        truth = Pose6DoF.from_dict(json.loads((sim_dir / "truth.json").read_text())["relative_slave_pose"])
        offsets = [(0.010, 0.0, math.radians(1.0)), (-0.010, 0.004, math.radians(-1.0)), (0.004, -0.002, 0.0)]
        for k, (dx, dy, da) in enumerate(offsets):
            _result_file(tmp_path / f"r{k}.json", Pose6DoF(truth.x + dx, truth.y + dy, truth.z, truth.alpha + da, truth.beta, truth.gamma))
        out = tmp_path / "ev"
        assert main(["evaluate", str(tmp_path / "r0.json"), str(tmp_path / "r[12].json"), "--truth", str(sim_dir / "truth.json"), "--out", str(out)]) == 0
        rows = {r.split(",")[0]: [float(v) for v in r.split(",")[1:]] for r in (out / "evaluation.csv").read_text().strip().split("\n")[1:]}
        assert rows["MAE"][0] == pytest.approx(8.0, abs=1e-4)
        assert rows["MAE"][1] == pytest.approx(2.0, abs=1e-4)
        assert rows["MAE"][3] == pytest.approx(2 / 3, abs=1e-4)
        assert rows["SD"][0] == pytest.approx(np.std([10, -10, 4], ddof=1), abs=1e-4)
        assert rows["SD"][1] == pytest.approx(np.std([0, 4, -2], ddof=1), abs=1e-4)
        assert "X (mm)" in (out / "evaluation.txt").read_text()

    def test_no_match(self, sim_dir, tmp_path):
        assert main(["evaluate", str(tmp_path / "none*.json"), "--truth", str(sim_dir / "truth.json"), "--out", str(tmp_path)]) == EXIT_INPUT


@pytest.mark.skipif(shutil.which("lhcalib") is None, reason="console script not installed")
def test_console_script(tmp_path):
    proc = subprocess.run(["lhcalib", "--help"], capture_output=True, text=True)
    assert proc.returncode == 0 and "calibrate" in proc.stdout
    proc = subprocess.run([sys.executable, "-m", "lhcalib.cli", "decode", str(tmp_path / "x.csv")], capture_output=True, text=True)
    assert proc.returncode == EXIT_INPUT
