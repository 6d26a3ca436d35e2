import json
from pathlib import Path

import numpy as np
import pytest

from cp2tori.cli import main, parse_nu
from cp2tori.connection import FrameField
from cp2tori.errors import BadDegree, IOFailure, ValidationError
from cp2tori.export import chart_coordinates, read_grid_csv, read_json, write_obj, write_omega_csv
from cp2tori.grid import PlanarGrid
from cp2tori.pipeline import PipelineConfig, export_artifact, run_pipeline
from cp2tori.verification import verify_artifacts

ROOT = Path(__file__).resolve().parents[1]


def _small(**kw):
    # generic seeds sit at the 5-point stencil floor of the Tzitzeica gate
    doc = {"d": 1, "rng_seed": 3, "seed_scale": 0.3, "gates": {"tzitzeica": 1e-3},
           "grid": {"u_range": [0, 0.25], "v_range": [0, 0.25], "n_u": 17},
           "exports": ["omega_grid", "invariants", "frame", "surface_mesh", "spectral", "killing_field"]}
    doc.update(kw)
    return PipelineConfig.from_dict(doc)


@pytest.fixture(scope="module")
def small_run(tmp_path_factory):
    out = tmp_path_factory.mktemp("small")
    return run_pipeline(_small(), out=out), out


def test_omega_csv_rows(tmp_path):
    g = PlanarGrid.over((0, 1), (0, 2), 5, 7)
    om = np.arange(35.0).reshape(5, 7)
    write_omega_csv(tmp_path / "o.csv", g, om)
    rows = [r for r in (tmp_path / "o.csv").read_text().splitlines() if r and not r.startswith("#")]
    assert rows[0] == "u,v,omega"
    assert len(rows) - 1 == 5 * 7
    g2, cols = read_grid_csv(tmp_path / "o.csv")
    assert np.array_equal(cols["omega"], om)
    assert g2.shape == g.shape


def test_obj_counts(tmp_path):
    g = PlanarGrid.over((0, 4 * np.pi), (0, 4 * np.pi), 64)
    z = g.z()
    y = np.stack([np.ones_like(z), np.exp(1j * z.real), np.exp(1j * z.imag)], -1) / np.sqrt(3)
    nv, nt = write_obj(tmp_path / "s.obj", y)
    assert (nv, nt) == (4096, 2 * 63**2)
    text = (tmp_path / "s.obj").read_text().splitlines()
    assert sum(ln.startswith("v ") for ln in text) == 4096
    assert sum(ln.startswith("f ") for ln in text) == 7938


def test_chart_zero_rejected():
    with pytest.raises(ValidationError):
        chart_coordinates(np.array([[0, 1, 0]], dtype=complex), 0)


def test_frame_roundtrip_bitwise(small_run, tmp_path):
    rep, out = small_run
    fr = rep.artifacts["frame"]
    back = FrameField.from_dict(read_json(out / "frame.json"))
    assert np.array_equal(back.F, fr.F)
    assert back.nu == fr.nu


def test_small_pipeline_outputs(small_run):
    rep, out = small_run
    assert rep.status == "complete"
    for name in ("omega.csv", "invariants.csv", "frame.json", "surface.obj", "spectral.json", "killing.json",
                 "report.json"):
        assert (out / name).exists()
    assert not (out / "FAILED").exists()
    doc = read_json(out / "report.json")
    assert doc["provenance"]["config_hash"] == rep.config.digest()
    assert {g["name"] for g in doc["gates"]} >= {"drift", "flatness", "unitarity", "angle", "phi", "psi_zbar", "tzitzeica"}


def test_export_format_checks(small_run, tmp_path):
    rep, _ = small_run
    with pytest.raises(ValidationError):
        export_artifact(rep, "surface_mesh", tmp_path / "x.csv", "csv")
    with pytest.raises(ValidationError):
        export_artifact(rep, "mesh", tmp_path / "x")
    p = export_artifact(rep, "omega_grid", tmp_path / "o.json", "structured")
    assert len(read_json(p)["omega"]) == 17


def test_config_strict_and_validation(tmp_path):
    with pytest.raises(ValidationError):
        PipelineConfig.from_dict({"d": 1, "colour": "red"})
    with pytest.raises(ValidationError):
        PipelineConfig.from_dict({"grid": {"u_range": [0, 1], "v_range": [0, 1], "spacing": 2}})
    with pytest.raises(ValidationError):
        _small(gates={"flatness": -1}).validate()
    with pytest.raises(ValidationError):
        _small(nu=[2]).validate()
    with pytest.raises(ValidationError):
        _small(source="omega_zero").validate()  # spectral export needs the Killing route
    with pytest.raises(BadDegree):
        run_pipeline(_small(d=2), out=tmp_path)
    assert (tmp_path / "FAILED").exists()
    assert read_json(tmp_path / "report.json")["failed_stage"] == "validation"


def test_config_roundtrip():
    cfg = _small(nu=[1, [0.6, 0.8]])
    back = PipelineConfig.from_dict(json.loads(json.dumps(cfg.to_dict())))
    assert back.to_dict() == cfg.to_dict() and back.digest() == cfg.digest()


def test_report_reproducible_across_threads():
    a = run_pipeline(_small(d=7, rng_seed=7, threads=1, exports=[]))
    b = run_pipeline(_small(d=7, rng_seed=7, threads=4, exports=[]))
    da, db = a.to_dict(), b.to_dict()
    for d in (da, db):
        d.pop("timings")
        d["config"].pop("threads")
        d["provenance"].pop("config_hash")
    assert json.dumps(da, sort_keys=True) == json.dumps(db, sort_keys=True)


def test_parse_nu():
    assert parse_nu("1, 0.6+0.8i, -i") == [1, 0.6 + 0.8j, -1j]
    with pytest.raises(ValidationError):
        parse_nu("one")


def test_verify_clean_and_nan(small_run, tmp_path, capsys):
    _, out = small_run
    assert verify_artifacts([out])["passed"]
    assert main(["verify", str(out)]) == 0
    bad = tmp_path / "bad"
    bad.mkdir()
    for f in out.iterdir():
        (bad / f.name).write_bytes(f.read_bytes())
    lines = (bad / "omega.csv").read_text().splitlines()
    k = next(i for i, ln in enumerate(lines) if ln.startswith("u,"))
    row = lines[k + 20].split(",")
    row[2] = "nan"
    lines[k + 20] = ",".join(row)
    (bad / "omega.csv").write_text("\n".join(lines) + "\n")
    capsys.readouterr()
    assert main(["verify", str(bad)]) == 2
    err = capsys.readouterr().err
    assert "NaN" in err and '"u"' in err and "omega.csv" in err


def test_cli_exit_codes(tmp_path, monkeypatch, capsys):
    assert main(["verify", str(tmp_path / "missing.json")]) == 4
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"d": 2}))
    assert main(["flow", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 3
    assert (tmp_path / "o" / "FAILED").exists()
    cfg.write_text(json.dumps({"d": 1, "bogus": 1}))
    assert main(["pipeline", "--config", str(cfg), "--out", str(tmp_path / "o2")]) == 3
    cfg.write_text(json.dumps({"d": 1, "rng_seed": 3, "seed_scale": 0.3, "gates": {"tzitzeica": 1e-3},
                               "grid": {"u_range": [0, 0.25], "v_range": [0, 0.25], "n_u": 17}}))
    monkeypatch.setenv("CP2TORI_OUT", str(tmp_path / "env"))
    assert main(["flow", "--config", str(cfg), "--tol", "1e-10"]) == 0
    assert (tmp_path / "env" / "killing.json").exists()
    assert main(["spectral", "--config", str(cfg), "--out", str(tmp_path / "sp")]) == 0
    assert read_json(tmp_path / "sp" / "spectral.json")["coefficients"]
    assert main(["export", "--config", str(cfg), "--artifact", "omega_grid", "--path", str(tmp_path / "w.csv")]) == 0
    assert (tmp_path / "w.csv").exists()


def test_cli_theta(tmp_path):
    fixture = ROOT / "tests" / "data" / "genus1_calibration.json"
    cfg = tmp_path / "t.json"
    cfg.write_text(json.dumps({"d": 1, "grid": {"u_range": [0, 1], "v_range": [0, 1], "n_u": 33},
                               "exports": ["invariants"]}))
    code = main(["theta", "--config", str(cfg), "--theta-data", str(fixture), "--out", str(tmp_path / "th")])
    assert code in (0, 2)
    doc = read_json(tmp_path / "th" / "report.json")
    assert doc["status"] == "complete"
    assert doc["values"]["theta"]["imaginary_leak"] < 1e-8
    # the theta subcommand stops before the surface stage
    assert doc["values"]["skipped_exports"] == ["invariants"]


def test_clifford_cli_verify(tmp_path):
    out = tmp_path / "cliff"
    assert main(["pipeline", "--config", str(ROOT / "configs" / "clifford.json"), "--out", str(out)]) == 0
    assert main(["verify", str(out)]) == 0
    doc = read_json(out / "report.json")
    assert doc["values"]["lattice"]["candidates"]
