import hashlib
import json

import pytest

from mvpoisson.cli import EXIT_INADMISSIBLE, EXIT_INFEASIBLE, EXIT_OK, EXIT_USAGE, main


def _sha(path):
    return hashlib.sha256(path.read_bytes()).hexdigest()


@pytest.fixture
def target_file(tmp_path):
    p = tmp_path / "target.json"
    p.write_text(json.dumps([[1, -0.8, -0.5], [-0.8, 1, 0.5], [-0.5, 0.5, 1]]))
    return p


def test_ejd_writes_measures_and_summary(tmp_path):
    assert main(["ejd", "--intensities", "3,5,7", "--epsilon", "0.01", "--out", str(tmp_path)]) == EXIT_OK
    for label in ("000", "001", "010", "011"):
        data = json.loads((tmp_path / f"measure_{label}.json").read_text())
        assert abs(sum(data["probs"]) - 1) < 1e-12
    summary = json.loads((tmp_path / "summary.json").read_text())
    assert len(summary["correlation_matrices"]) == 4


def test_calibrate_then_simulate(tmp_path, target_file):
    out = tmp_path / "run"
    args = ["--intensities", "3,5,7", "--epsilon", "1e-5", "--out", str(out)]
    assert main(["calibrate", *args, "--target", str(target_file)]) == EXIT_OK
    cal = json.loads((out / "calibration.json").read_text())
    assert cal["residual"] <= 1e-8
    assert main(["simulate", *args, "--calibration", str(out / "calibration.json"),
                 "--paths", "500", "--intervals", "2", "--seed", "7"]) == EXIT_OK
    first = _sha(out / "paths.csv")
    curve = (out / "curve.csv").read_text().splitlines()
    assert len(curve) == 1 + 200 * 3
    assert main(["simulate", *args, "--calibration", str(out / "calibration.json"),
                 "--paths", "500", "--intervals", "2", "--seed", "7", "--threads", "4"]) == EXIT_OK
    assert _sha(out / "paths.csv") == first


def test_infeasible_exit_code(tmp_path, target_file):
    code = main(["calibrate", "--intensities", "1,2,3", "--epsilon", "1e-5",
                 "--target", str(target_file), "--out", str(tmp_path)])
    assert code == EXIT_INFEASIBLE
    assert not (tmp_path / "calibration.json").exists()


def test_inadmissible_exit_code(tmp_path):
    t = tmp_path / "t.json"
    t.write_text(json.dumps({"target": [[1, 0.99], [0.99, 1]]}))
    assert main(["calibrate", "--intensities", "3,5", "--target", str(t), "--out", str(tmp_path)]) == EXIT_INADMISSIBLE


@pytest.mark.parametrize("argv", [
    ["simulate", "--intensities", "3,5"],
    ["ejd", "--intensities", "3"],
    ["ejd", "--intensities", "3,-5"],
    ["ejd", "--intensities", "3,5", "--epsilon", "1.5"],
    ["calibrate", "--intensities", "3,5"],
    ["simulate", "--intensities", "3,5", "--structure", "0,1,1"],
])
def test_usage_errors(argv, tmp_path):
    assert main([*argv, "--out", str(tmp_path)]) == EXIT_USAGE


def test_config_file_with_flag_override(tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"intensities": [3, 5], "epsilon": 0.01, "n_paths": 50, "structure": [0, 1]}))
    out = tmp_path / "o"
    assert main(["simulate", "--config", str(cfg), "--paths", "20", "--out", str(out)]) == EXIT_OK
    rows = (out / "paths.csv").read_text().splitlines()[1:]
    assert max(int(r.split(",")[0]) for r in rows) <= 19


def test_unknown_config_key(tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"intensities": [3, 5], "bogus": 1}))
    assert main(["ejd", "--config", str(cfg), "--out", str(tmp_path)]) == EXIT_USAGE


def test_reproduce_paper(capsys):
    assert main(["reproduce-paper"]) == EXIT_OK
    out = capsys.readouterr().out
    assert "FAIL" not in out
    assert out.count("PASS") == 9
