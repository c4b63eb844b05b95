import json

import numpy as np
import pytest

from stochmather import io
from stochmather.cli import main
from stochmather.diagnostics import sigma_sweep
from stochmather.errors import StochMatherError
from stochmather.measure import check_identities
from stochmather.report import RunConfig, ValidationReport, load_report, run_validate

from conftest import cos_model

COS = {"kind": "mechanical", "dim": 1,
       "potential": {"constant": 0.0, "terms": [{"k": [1], "cos": 1.0}]}}
FREE = {"kind": "mechanical", "dim": 1, "potential": {"constant": 0.0, "terms": []}}


@pytest.fixture
def model_files(tmp_path):
    (tmp_path / "cos.json").write_text(json.dumps(COS))
    (tmp_path / "free.json").write_text(json.dumps(FREE))
    return tmp_path


def run(capsys, *argv):
    code = main(list(argv))
    return code, json.loads(capsys.readouterr().out)


def test_cell_solution_round_trip(tmp_path, bench_sol):
    path = io.export(bench_sol, tmp_path / "sol.json")
    data = json.loads(path.read_text())
    assert data["format_version"] == io.FORMAT_VERSION
    assert {"P", "sigma", "Hbar", "residual", "u"} <= set(data)
    back = io.load_cell_solution(path)
    assert back.Hbar == bench_sol.Hbar
    np.testing.assert_array_equal(back.u.values, bench_sol.u.values)
    np.testing.assert_array_equal(back.drift.components, bench_sol.drift.components)
    np.testing.assert_array_equal(back.model.potential.values, bench_sol.model.potential.values)


def test_density_csv_round_trip(tmp_path, bench_dens):
    path = io.export(bench_dens, tmp_path / "d.csv")
    header, rows = io.read_csv(path)
    assert header == ["x", "value"]
    np.testing.assert_array_equal(io.read_field_csv(path, bench_dens.grid).values,
                                  bench_dens.theta.values)


def test_sweep_and_identity_export(tmp_path, bench, bench_sol, bench_dens):
    sw = sigma_sweep(cos_model(64), 0.0, [1.0, 0.5])
    header, rows = io.read_csv(io.export(sw, tmp_path / "s.csv"))
    assert header == ["sigma", "Hbar", "u_sup_diff", "theta_l1"]
    np.testing.assert_array_equal(rows[:, 1], sw.Hbar)
    rep = check_identities(bench, bench_sol, bench_dens)
    data = io.read_json(io.export(rep, tmp_path / "i.json"))
    assert data["id1_err"] == rep.id1_err


def test_export_errors_carry_path(tmp_path, bench_sol):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    with pytest.raises(OSError, match="file"):
        io.export(bench_sol, blocker / "sol.json")
    with pytest.raises(TypeError):
        io.export(object(), tmp_path / "x.json")
    with pytest.raises(OSError, match="missing"):
        io.read_json(tmp_path / "missing.json")


def test_version_check(tmp_path):
    with pytest.raises(StochMatherError):
        io.cell_from_dict({"format_version": 99, "type": "cell_solution"})


def test_run_config_validation():
    with pytest.raises(ValueError):
        RunConfig(model=COS, tolerances={"id1": -1.0})
    with pytest.raises(ValueError):
        RunConfig(model=COS, tolerances={"bogus": 1.0})
    with pytest.raises(ValueError):
        RunConfig.from_mapping({"model": COS, "colour": "red"})
    assert RunConfig(model=COS, n=256).lp_nodes == 40
    assert RunConfig(model=COS, n=16).lp_nodes == 16


def test_validate_free_all_routes(tmp_path):
    cfg = RunConfig(model=FREE, sigma=0.5, P=(1.0,), n=64, T=5.0, paths=16,
                    out_dir=str(tmp_path))
    rep = run_validate(cfg)
    assert rep.passed
    for route, key in (("cell", "Hbar"), ("spectral", "lambda"), ("lp", "Hbar"),
                       ("simulation", "Hbar")):
        assert rep.routes[route][key] == pytest.approx(0.5, abs=1e-6)
    for c in rep.deltas:
        assert c["tolerance"] is not None
    back = load_report(tmp_path / "report.json")
    assert back.to_dict() == rep.to_dict()
    assert io.dumps(back.to_dict()) == (tmp_path / "report.json").read_text()
    for name in ("cell.json", "density.csv", "lp_marginal.csv", "endpoints.csv"):
        assert (tmp_path / name).exists()


def test_validate_concurrent_matches_sequential(tmp_path):
    base = dict(model=COS, n=64, T=2.0, paths=4, regularity=False)
    a = run_validate(RunConfig(**base, out_dir=str(tmp_path / "a")))
    b = run_validate(RunConfig(**base, concurrent=True, out_dir=str(tmp_path / "b")))
    assert a.routes == b.routes


def test_validate_stage_failure_recorded(tmp_path):
    # a velocity box that is too small makes the LP stage fail; other stages still run
    rep = run_validate(RunConfig(model=FREE, P=(3.0,), n=32, v_max=2.0, T=1.0, paths=4,
                                 regularity=False, out_dir=str(tmp_path)))
    assert not rep.passed
    assert [e["stage"] for e in rep.errors] == ["lp"]
    assert "spectral" in rep.routes and "simulation" in rep.routes


def test_cli_cell_measure_simulate(model_files, capsys, monkeypatch):
    monkeypatch.setenv("SM_OUT_DIR", str(model_files / "out"))
    code, out = run(capsys, "cell", "--model", str(model_files / "cos.json"), "--sigma", "0.8",
                    "--P", "1", "--n", "64")
    assert code == 0
    assert out["out"].startswith(str(model_files / "out"))
    code, out = run(capsys, "measure", "--cell", out["out"], "--identities", "--dP", "1e-2")
    assert code == 0 and out["identities"]["id1_err"] < 1e-8
    code, out = run(capsys, "simulate", "--cell", str(model_files / "out" / "cell.json"),
                    "--T", "1", "--paths", "4", "--endpoints", "ends.csv")
    assert code == 0
    assert (model_files / "out" / "ends.csv").exists()


def test_cli_spectral_lp_sweep(model_files, capsys, monkeypatch):
    monkeypatch.setenv("SM_OUT_DIR", str(model_files))
    m = str(model_files / "cos.json")
    code, out = run(capsys, "spectral", "--model", m, "--n", "64")
    assert code == 0 and out["lambda"] > 0
    code, out = run(capsys, "lp", "--model", m, "--n", "16", "--m", "21")
    assert code == 0 and abs(out["gap"]) < 1e-9
    assert (model_files / "lp_marginal.csv").exists()
    code, out = run(capsys, "sweep", "--model", m, "--n", "64", "--sigmas", "1,0.5")
    assert code == 0 and len(out["Hbar"]) == 2


def test_cli_config_file_and_flags_win(model_files, capsys, monkeypatch):
    monkeypatch.setenv("SM_OUT_DIR", str(model_files))
    (model_files / "cfg.json").write_text(json.dumps({"model": "cos.json", "n": 32, "sigma": 2.0}))
    code, out = run(capsys, "cell", "--config", str(model_files / "cfg.json"), "--sigma", "1.0")
    assert code == 0
    sol = io.load_cell_solution(out["out"])
    assert sol.sigma == 1.0 and sol.grid.nodes_per_axis == 32


def test_cli_malformed_model(model_files, capsys, monkeypatch):
    monkeypatch.setenv("SM_OUT_DIR", str(model_files / "bad"))
    (model_files / "bad.json").write_text('{"kind": "mechanical", "potential": {"samples": "x"}}')
    code, out = run(capsys, "cell", "--model", str(model_files / "bad.json"))
    assert code != 0 and out["error"] == "ModelError"
    code, out = run(capsys, "validate", "--model", str(model_files / "bad.json"), "--n", "16")
    assert code != 0 and out["errors"][0]["type"] == "ModelError"
    (model_files / "broken.json").write_text("{oops")
    code, out = run(capsys, "cell", "--model", str(model_files / "broken.json"))
    assert code != 0 and "broken.json" in out["message"]


def test_cli_validate_exit_zero(model_files, capsys, monkeypatch):
    monkeypatch.setenv("SM_OUT_DIR", str(model_files / "v"))
    code, out = run(capsys, "validate", "--model", str(model_files / "free.json"), "--P", "1",
                    "--n", "32", "--T", "5", "--paths", "32")
    assert code == 0 and out["passed"]
    assert isinstance(load_report(out["report"]), ValidationReport)
