from __future__ import annotations

import json

import pytest

from cutfem_ib.cli import build_parser, main


def test_converge_two_meshes(tmp_path, capsys):
    code = main(["converge", "--h-list", "8,16", "--output-dir", str(tmp_path), "--min-l2-rate", "0",
                 "--min-h1-rate", "0", "--min-p-l2-rate", "0", "--min-p-h1-rate", "0"])
    assert code == 0
    lines = (tmp_path / "converge_velocity.csv").read_text().splitlines()
    assert lines[0] == "inv_h,L2,k_L2,H1,k_H1,Linf,k_Linf,W1inf,k_W1inf"
    assert len(lines) == 3
    assert lines[1].split(",")[2] == "undefined" and lines[2].split(",")[2] != "undefined"
    assert len((tmp_path / "converge_pressure.csv").read_text().splitlines()) == 3


def test_converge_threshold_failure(tmp_path):
    assert main(["converge", "--h-list", "8,16", "--min-h1-rate", "9", "--output-dir", str(tmp_path)]) == 1


def test_bad_h_list():
    with pytest.raises(SystemExit):
        build_parser().parse_args(["converge", "--h-list", "16,8"])


def _write_cfg(path, **kw):
    data = {"name": "t", "n_cells": 16, "dt": 0.01, "t_final": 0.02, "kappa": 6.0, "clearance_cells": 1.0,
            "curve": {"type": "ellipse"}, "snapshot_times": [0.01]}
    data.update(kw)
    path.write_text(json.dumps(data))
    return path


def test_run_outputs_are_deterministic(tmp_path):
    cfg = _write_cfg(tmp_path / "c.json")
    a, b = tmp_path / "a", tmp_path / "b"
    assert main(["run", str(cfg), "--output-dir", str(a)]) == 0
    assert main(["run", str(cfg), "--output-dir", str(b), "--threads", "2"]) == 0
    for name in ("energy.csv", "area.csv", "interface_000000.csv", "interface_000001.csv", "interface_000002.csv"):
        assert (a / name).read_bytes() == (b / name).read_bytes()
    assert (a / "energy.csv").read_text().splitlines()[0] == "n,t,kinetic,elastic,total,slack,area,area_deviation"
    summary = json.loads((a / "summary.json").read_text())
    assert summary["status"] == "completed"
    assert summary["config"]["gamma_u"] == pytest.approx(10 + 10 / 256 / 0.01)
    assert summary["min_slack"] >= -1e-8 * summary["initial_energy"]
    assert (a / "interface_000001.svg").read_text().count('viewBox="0 0 1 1"') == 1


def test_run_dumps(tmp_path):
    cfg = _write_cfg(tmp_path / "c.json", t_final=0.01, dump_fields=True, dump_matrix=True)
    assert main(["run", str(cfg), "--output-dir", str(tmp_path / "o")]) == 0
    assert (tmp_path / "o" / "fields.vtk").exists()
    assert (tmp_path / "o" / "matrix.mtx").read_text().startswith("%%MatrixMarket")


def test_run_static_mode(tmp_path):
    cfg = _write_cfg(tmp_path / "s.json", mode="static", m=200, curve={"type": "circle", "r": 0.3})
    assert main(["run", str(cfg), "--output-dir", str(tmp_path / "o")]) == 0
    s = json.loads((tmp_path / "o" / "summary.json").read_text())
    assert s["errors"]["velocity"]["L2"] < 1e-3


def test_run_reports_instability(tmp_path, capsys):
    cfg = _write_cfg(tmp_path / "c.json", nu=0, dt=0.5, t_final=2.0)
    assert main(["run", str(cfg), "--output-dir", str(tmp_path / "o")]) == 2
    assert "instability diagnosed" in capsys.readouterr().out
    s = json.loads((tmp_path / "o" / "summary.json").read_text())
    assert s["status"] == "unstable" and s["failed_step"] >= 1


def test_run_schema_error(tmp_path, capsys):
    p = tmp_path / "bad.json"
    p.write_text(json.dumps({"curve": {"type": "ellipse"}, "nu": 3}))
    assert main(["run", str(p)]) == 2
    assert "field 'nu'" in capsys.readouterr().err


def test_richardson_undefined_cells(tmp_path, monkeypatch):
    import cutfem_ib.cli as cli

    def fake_study(cfg, base, halvings, t_probe):
        dts = [base / 2**k for k in range(halvings + 1)]
        diffs = [0.2, 0.0, 0.0]
        return dts, diffs, [cli.dg.richardson_ratio(a, b) for a, b in zip(diffs, diffs[1:])], []

    monkeypatch.setattr(cli, "richardson_study", fake_study)
    cfg = _write_cfg(tmp_path / "r.json")
    assert main(["richardson", str(cfg), "--base-dt", "0.1", "--halvings", "3",
                 "--output-dir", str(tmp_path / "o")]) == 0
    lines = (tmp_path / "o" / "richardson.csv").read_text().splitlines()
    assert lines[0] == "dt,dt_half,dt_quarter,diff_coarse,diff_fine,r"
    assert all(l.endswith("undefined") for l in lines[1:]) and len(lines) == 3


def test_richardson_needs_two_halvings(tmp_path):
    cfg = _write_cfg(tmp_path / "r.json")
    assert main(["richardson", str(cfg), "--halvings", "1", "--output-dir", str(tmp_path)]) == 2
