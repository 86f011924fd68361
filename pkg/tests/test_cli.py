import csv
import io
import json
import math

import pytest

from shearrg import rgflow
from shearrg.cli import main
from shearrg.spectra import SpectralParams


def run(capsys, *argv):
    code = main(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


def test_classify_unsteady(capsys):
    code, out, _ = run(capsys, "classify", "--model", "unsteady", "--epsilon", "1", "--z", "3")
    assert code == 0
    data = json.loads(out)
    assert data["regime"] == "V" and data["alpha"] == pytest.approx(4 / 3)


def test_classify_steady_mean_field(capsys):
    code, out, _ = run(capsys, "classify", "--model", "steady", "--epsilon", "-1")
    data = json.loads(out)
    assert (data["regime"], data["alpha"]) == ("SteadyMeanField", 2.0)


def test_classify_inadmissible(capsys):
    code, _, err = run(capsys, "classify", "--model", "steady", "--epsilon", "5")
    assert code == 2 and "epsilon must be < 4" in err


def test_bad_flag_is_usage_error(capsys):
    assert run(capsys, "classify", "--bogus")[0] == 2


def test_phase_diagram(capsys):
    code, out, _ = run(capsys, "phase-diagram", "--resolution", "200", "--eps-min", "-0.99",
                       "--eps-max", "3.99", "--z-min", "0.01", "--z-max", "2.99")
    rows = list(csv.DictReader(io.StringIO(out)))
    assert len(rows) == 200 * 200
    seen = {r["regime"] for r in rows}
    assert {"I", "II", "III", "IV", "V"} <= seen
    for r in rows[::97]:
        report = rgflow.classify(SpectralParams(float(r["epsilon"]), float(r["z"]), model="unsteady"))
        assert report.regime.value == r["regime"]


def test_phase_diagram_flags_boundary(capsys):
    code, out, _ = run(capsys, "phase-diagram", "--resolution", "3", "--eps-min", "0",
                       "--eps-max", "2", "--z-min", "1", "--z-max", "3")
    rows = list(csv.DictReader(io.StringIO(out)))
    assert any(r["regime"] == "Boundary" for r in rows)
    assert all(r["alpha"] == "nan" for r in rows if r["regime"] == "Boundary")


def test_flow_hyperscaling(capsys, tmp_path):
    series = tmp_path / "f.csv"
    code, out, _ = run(capsys, "flow", "--regime", "hyperscaling", "--epsilon", "3", "--l-max", "10",
                       "--csv", str(series))
    rec = json.loads(out)
    assert code == 0
    assert abs(rec["outputs"]["v0_final"] + 1 / math.pi) < 1e-3
    assert series.read_text().startswith("l,v0,stderr,distance")


def test_flow_regime_mismatch(capsys):
    assert run(capsys, "flow", "--regime", "II", "--epsilon", "3")[0] == 2


def test_flow_paths_mode_reproducible(capsys):
    args = ("flow", "--model", "unsteady", "--epsilon", "1.5", "--z", "1.5", "--mode", "paths",
            "--n-paths", "4", "--n-steps", "256", "--l-max", "20", "--n-l", "3")
    a = json.loads(run(capsys, *args)[1])
    b = json.loads(run(capsys, *args)[1])
    a["provenance"].pop("timestamp"), b["provenance"].pop("timestamp")
    assert a == b


def test_fixed_point_with_config(capsys, tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"schema_version": 1, "command": "fixed-point",
                               "options": {"model": "unsteady", "epsilon": 1.5, "z": 1.2}}))
    rec = json.loads(run(capsys, "fixed-point", "--config", str(cfg))[1])
    assert rec["outputs"]["coefficient"] == pytest.approx(-1 / (0.7 * math.pi))
    rec = json.loads(run(capsys, "fixed-point", "--config", str(cfg), "--z", "1.5")[1])
    assert rec["outputs"]["regime"] == "IV"


def test_bad_config_exit(capsys, tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"schema_version": 1, "options": {"resolution": 5}}))
    assert run(capsys, "fixed-point", "--config", str(cfg), "--epsilon", "3")[0] == 2


def test_msd_empty_window(capsys):
    code, out, _ = run(capsys, "msd", "--epsilon", "1", "--delta", "1", "--t-min", "1",
                       "--t-max", "10", "--n-t", "3", "--n-paths", "2")
    rec = json.loads(out)
    assert code == 0 and rec["outputs"]["slope"] == pytest.approx(1.0)


def test_nu_alpha_and_kernel(capsys):
    rec = json.loads(run(capsys, "nu-alpha", "--epsilon", "1", "--n-paths", "16")[1])
    assert rec["outputs"]["all_nonpositive"]
    rec = json.loads(run(capsys, "kernel", "--epsilon", "1", "--n-bridges", "16", "--n-steps", "32",
                         "--field-seed", "1")[1])
    assert "value" in rec["outputs"]


def test_validate_fk(capsys):
    code, out, _ = run(capsys, "validate-fk", "--epsilon", "0", "--n-paths", "20000",
                       "--n-realizations", "2")
    assert code == 0 and json.loads(out)["outputs"]["agree"]
