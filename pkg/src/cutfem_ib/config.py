"""Run configuration: JSON schema, parsing and resolved parameters."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Any

import jsonschema

from .errors import ConfigError
from .interface import Circle, CurveSpec, Ellipse, Heart, PointList

_POS = {"type": "number", "exclusiveMinimum": 0}
_POINT = {"type": "array", "items": {"type": "number"}, "minItems": 2, "maxItems": 2}

CURVE_SCHEMA = {
    "oneOf": [
        {
            "type": "object",
            "properties": {"type": {"const": "ellipse"}, "a": _POS, "b": _POS, "center": _POINT},
            "required": ["type"],
            "additionalProperties": False,
        },
        {
            "type": "object",
            "properties": {
                "type": {"const": "circle"},
                "r": _POS,
                "center": _POINT,
                "reparam": {"enum": ["none", "cubic"]},
            },
            "required": ["type"],
            "additionalProperties": False,
        },
        {
            "type": "object",
            "properties": {"type": {"const": "heart"}, "scale": _POS},
            "required": ["type"],
            "additionalProperties": False,
        },
        {
            "type": "object",
            "properties": {
                "type": {"const": "points"},
                "points": {"type": "array", "items": _POINT, "minItems": 8},
            },
            "required": ["type", "points"],
            "additionalProperties": False,
        },
        {
            "type": "object",
            "properties": {"type": {"const": "csv"}, "path": {"type": "string"}},
            "required": ["type", "path"],
            "additionalProperties": False,
        },
    ]
}

CONFIG_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "title": "cutfem-ib run configuration",
    "type": "object",
    "properties": {
        "name": {"type": "string"},
        "mode": {"enum": ["static", "dynamic"]},
        "n_cells": {"type": "integer", "minimum": 2},
        "m": {"oneOf": [{"type": "integer", "minimum": 8}, {"const": "auto"}]},
        "L": _POS,
        "dt": _POS,
        "t_final": _POS,
        "mu": _POS,
        "kappa": {"type": "number", "minimum": 0},
        "gamma1": _POS,
        "gamma2": _POS,
        "nu": {"enum": [0, 1]},
        "curve": CURVE_SCHEMA,
        "snapshot_times": {"type": "array", "items": {"type": "number", "minimum": 0}},
        "snapshot_every": {"type": "integer", "minimum": 0},
        "clearance_cells": {"type": "number", "minimum": 0},
        "max_move_cells": {"oneOf": [_POS, {"type": "null"}]},
        "blowup_factor": _POS,
        "halvings": {"type": "integer", "minimum": 2},
        "dump_fields": {"type": "boolean"},
        "dump_matrix": {"type": "boolean"},
    },
    "required": ["curve"],
    "additionalProperties": False,
}


@dataclass(frozen=True)
class RunConfig:
    """Fully resolved experiment parameters.

    ``clearance_cells`` is the required vertex distance to the outer boundary in
    units of ``h``; ``max_move_cells`` bounds the per-step vertex displacement
    (``None``, the default, disables the guard).
    """

    curve: dict
    name: str = "run"
    mode: str = "dynamic"
    n_cells: int = 32
    m: int | str = "auto"
    L: float = 1.0
    dt: float = 0.01
    t_final: float = 1.0
    mu: float = 1.0
    kappa: float = 10.0
    gamma1: float = 10.0
    gamma2: float = 10.0
    nu: int = 1
    snapshot_times: tuple[float, ...] = ()
    snapshot_every: int = 0
    clearance_cells: float = 2.0
    max_move_cells: float | None = None
    blowup_factor: float = 1e6
    halvings: int = 4
    dump_fields: bool = False
    dump_matrix: bool = False
    base_dir: str = field(default=".", compare=False)

    @property
    def h(self) -> float:
        return 1.0 / self.n_cells

    @property
    def n_steps(self) -> int:
        return int(round(self.t_final / self.dt))

    @property
    def clearance(self) -> float:
        return self.clearance_cells * self.h

    @property
    def max_move(self) -> float | None:
        return None if self.max_move_cells is None else self.max_move_cells * self.h

    def curve_spec(self) -> CurveSpec:
        return CurveSpec(parse_curve(self.curve, self.base_dir), None if self.m == "auto" else int(self.m), self.L)

    def with_(self, **kw) -> "RunConfig":
        return replace(self, **kw)

    def penalty(self):
        from .assembly import PenaltyParameters

        return PenaltyParameters(
            mu=self.mu,
            h=self.h,
            dt=None if self.mode == "static" else self.dt,
            kappa=self.kappa,
            gamma1=self.gamma1,
            gamma2=self.gamma2,
            nu=self.nu,
        )

    def resolved(self) -> dict[str, Any]:
        """Config plus derived quantities, as embedded in ``summary.json``."""
        d = asdict(self)
        d.pop("base_dir")
        d["snapshot_times"] = list(self.snapshot_times)
        p = self.penalty()
        d["h"] = self.h
        d["n_steps"] = self.n_steps
        d["gamma_u"] = p.gamma_u
        d["gamma_p"] = p.gamma_p
        return d


def parse_curve(spec: dict, base_dir: str | Path = "."):
    kind = spec["type"]
    if kind == "ellipse":
        return Ellipse(spec.get("a", 0.3), spec.get("b", 0.4), tuple(spec.get("center", (0.5, 0.5))))
    if kind == "circle":
        return Circle(
            spec.get("r", 0.25), tuple(spec.get("center", (0.5, 0.5))), spec.get("reparam", "none") == "cubic"
        )
    if kind == "heart":
        return Heart(spec.get("scale", 1.0 / 40.0))
    if kind == "points":
        return PointList(tuple(tuple(p) for p in spec["points"]))
    if kind == "csv":
        from .interface import read_polygon_csv

        path = Path(spec["path"])
        if not path.is_absolute():
            path = Path(base_dir) / path
        poly = read_polygon_csv(path)
        return PointList(tuple(map(tuple, poly.points)))
    raise ConfigError(f"unknown curve type {kind!r}")


def _format_error(err: jsonschema.ValidationError) -> str:
    where = "/".join(str(p) for p in err.absolute_path) or "<root>"
    return f"field '{where}': {err.message}"


def config_from_dict(data: dict, base_dir: str | Path = ".") -> RunConfig:
    validator = jsonschema.Draft202012Validator(CONFIG_SCHEMA)
    errors = sorted(validator.iter_errors(data), key=lambda e: list(e.absolute_path))
    if errors:
        raise ConfigError("invalid config: " + "; ".join(_format_error(e) for e in errors))
    kw = dict(data)
    if "snapshot_times" in kw:
        kw["snapshot_times"] = tuple(float(t) for t in kw["snapshot_times"])
    cfg = RunConfig(base_dir=str(base_dir), **kw)
    if cfg.mode == "dynamic" and abs(cfg.n_steps * cfg.dt - cfg.t_final) > 1e-9 * cfg.t_final:
        raise ConfigError(f"field 't_final': {cfg.t_final} is not a whole number of steps of dt={cfg.dt}")
    return cfg


def load_config(path: str | Path) -> RunConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: line {exc.lineno}, column {exc.colno}: {exc.msg}") from exc
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: top-level JSON value must be an object")
    try:
        return config_from_dict(data, path.parent)
    except ConfigError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
