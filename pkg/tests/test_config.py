from __future__ import annotations

import json

import pytest

from cutfem_ib.config import RunConfig, config_from_dict, load_config
from cutfem_ib.errors import ConfigError
from cutfem_ib.interface import Circle, Ellipse, Heart, PointList


def test_bundled_configs_load(config_dir):
    files = sorted(config_dir.glob("*.json"))
    assert len(files) >= 8
    for f in files:
        cfg = load_config(f)
        assert cfg.name
        spec = cfg.curve_spec()
        assert isinstance(spec.curve, (Ellipse, Circle, Heart, PointList))


def test_resolved_contains_derived_penalties():
    cfg = config_from_dict({"curve": {"type": "ellipse"}, "n_cells": 32, "dt": 0.01})
    d = cfg.resolved()
    assert d["gamma_p"] == pytest.approx(0.025)
    assert d["gamma_u"] == pytest.approx(10.9765625)
    assert d["h"] == 1 / 32 and d["n_steps"] == 100
    json.dumps(d)


@pytest.mark.parametrize(
    "data, field",
    [
        ({"curve": {"type": "ellipse"}, "nu": 2}, "nu"),
        ({"curve": {"type": "ellipse"}, "dt": -1}, "dt"),
        ({"curve": {"type": "square"}}, "curve"),
        ({"curve": {"type": "ellipse"}, "bogus": 1}, "<root>"),
        ({}, "<root>"),
        ({"curve": {"type": "ellipse"}, "m": 3}, "m"),
    ],
)
def test_schema_errors_name_the_field(data, field):
    with pytest.raises(ConfigError) as exc:
        config_from_dict(data)
    assert f"field '{field}'" in str(exc.value)


def test_t_final_must_be_whole_steps():
    with pytest.raises(ConfigError, match="t_final"):
        config_from_dict({"curve": {"type": "ellipse"}, "dt": 0.03, "t_final": 0.1})


def test_json_syntax_error_reports_position(tmp_path):
    p = tmp_path / "bad.json"
    p.write_text('{\n  "curve": {"type": "ellipse"},\n  "dt": 0.01,,\n}\n')
    with pytest.raises(ConfigError, match=r"line 3, column"):
        load_config(p)


def test_csv_curve_relative_path(tmp_path):
    from cutfem_ib.interface import Circle as C, CurveSpec, sample_initial, write_polygon_csv

    write_polygon_csv(sample_initial(CurveSpec(C(0.2), 40)), tmp_path / "x.csv")
    (tmp_path / "c.json").write_text(json.dumps({"curve": {"type": "csv", "path": "x.csv"}}))
    cfg = load_config(tmp_path / "c.json")
    assert len(cfg.curve_spec().curve.points) == 40


def test_defaults():
    cfg = RunConfig(curve={"type": "ellipse"})
    assert (cfg.gamma1, cfg.gamma2, cfg.nu, cfg.mode) == (10.0, 10.0, 1, "dynamic")
    assert cfg.max_move is None
    assert cfg.with_(n_cells=16).clearance == pytest.approx(2 / 16)
