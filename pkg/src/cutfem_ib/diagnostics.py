"""Error norms, convergence and Richardson tables, traction, area, and report files."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .assembly import PenaltyParameters, assemble_rhs_manufactured, assemble_system, vertex_elements
from .errors import EvaluationError
from .exact import ExactSolution
from .interface import InterfacePolygon, polygon_from_points
from .mesh import build_mesh, classify_elements
from .quadrature import CutGeometry, build_cut_geometry
from .solver import factor_system
from .spaces import DofMap, eval_pressure, eval_velocity

NORMS = ("L2", "H1", "Linf", "W1inf")


# --------------------------------------------------------------------------
# error norms
# --------------------------------------------------------------------------
def _pressure_means(dm, x, geom, exact) -> tuple[float, float]:
    area = pm = pe = 0.0
    for side in (1, 2):
        ps = geom.bulk(side)
        if len(ps) == 0:
            continue
        pm += ps.weights @ eval_pressure(dm, x, side, ps.points, ps.elem)
        pe += ps.weights @ exact.p(side, ps.points[:, 0], ps.points[:, 1])
        area += ps.weights.sum()
    return pm / area, pe / area


def _probe_points(dm: DofMap, geom: CutGeometry, side: int) -> tuple[np.ndarray, np.ndarray]:
    """(points, elements) for the max norms: every Q2 node of every side element plus interface points."""
    mesh = dm.mesh
    act = np.flatnonzero(dm.active[side - 1])
    nodes = mesh.elem_nodes[act]
    pts = mesh.node_coords[nodes].reshape(-1, 2)
    elems = np.repeat(act, 9)
    q = geom.interface
    poly = geom.polygon
    e1, e2 = vertex_elements(geom.cls, poly.points)
    ends = np.vstack([q.points, poly.points])
    ee = np.concatenate([q.elem1 if side == 1 else q.elem2, e1 if side == 1 else e2])
    # element-edge intersection points of the interface
    cuts = _edge_crossings(geom)
    if len(cuts[0]):
        ends = np.vstack([ends, cuts[0]])
        ee = np.concatenate([ee, cuts[1] if side == 1 else cuts[2]])
    return np.vstack([pts, ends]), np.concatenate([elems, ee])


def _edge_crossings(geom: CutGeometry):
    pieces = geom.cls.pieces
    if len(pieces) == 0:
        return np.zeros((0, 2)), np.zeros(0, int), np.zeros(0, int)
    return pieces.a, pieces.elem1, pieces.elem2


@dataclass
class ErrorNorms:
    velocity: dict[str, float]
    pressure: dict[str, float]


def error_norms(dm: DofMap, x: np.ndarray, geom: CutGeometry, exact: ExactSolution) -> ErrorNorms:
    """L2, H1 (full norm), Linf and W1inf errors of velocity and mean-aligned pressure.

    ``Linf`` is the largest component error at the probe points; ``W1inf``
    is the larger of ``Linf`` and the largest gradient-entry error.
    """
    pm, pe_mean = _pressure_means(dm, x, geom, exact)
    ul2 = ug2 = pl2 = pg2 = 0.0
    for side in (1, 2):
        ps = geom.bulk(side)
        if len(ps) == 0:
            continue
        X, Y = ps.points[:, 0], ps.points[:, 1]
        u, gu = eval_velocity(dm, x, side, ps.points, ps.elem, grad=True)
        p, gp = eval_pressure(dm, x, side, ps.points, ps.elem, grad=True)
        eu = u - exact.u(side, X, Y)
        egu = gu - exact.grad_u(side, X, Y)
        ep = (p - pm) - (exact.p(side, X, Y) - pe_mean)
        egp = gp - exact.grad_p(side, X, Y)
        w = ps.weights
        ul2 += w @ np.sum(eu**2, axis=1)
        ug2 += w @ np.sum(egu**2, axis=(1, 2))
        pl2 += w @ ep**2
        pg2 += w @ np.sum(egp**2, axis=1)
    uinf = ugi = pinf = pgi = 0.0
    for side in (1, 2):
        pts, el = _probe_points(dm, geom, side)
        X, Y = pts[:, 0], pts[:, 1]
        u, gu = eval_velocity(dm, x, side, pts, el, grad=True)
        p, gp = eval_pressure(dm, x, side, pts, el, grad=True)
        uinf = max(uinf, float(np.abs(u - exact.u(side, X, Y)).max()))
        ugi = max(ugi, float(np.abs(gu - exact.grad_u(side, X, Y)).max()))
        pinf = max(pinf, float(np.abs((p - pm) - (exact.p(side, X, Y) - pe_mean)).max()))
        pgi = max(pgi, float(np.abs(gp - exact.grad_p(side, X, Y)).max()))
    return ErrorNorms(
        velocity={"L2": math.sqrt(ul2), "H1": math.sqrt(ul2 + ug2), "Linf": uinf, "W1inf": max(uinf, ugi)},
        pressure={"L2": math.sqrt(pl2), "H1": math.sqrt(pl2 + pg2), "Linf": pinf, "W1inf": max(pinf, pgi)},
    )


# --------------------------------------------------------------------------
# static solve and convergence tables
# --------------------------------------------------------------------------
@dataclass
class StaticSolution:
    dofmap: DofMap
    coeffs: np.ndarray
    geom: CutGeometry
    params: PenaltyParameters
    residual: float


def solve_static(
    poly: InterfacePolygon,
    n_cells: int,
    exact: ExactSolution,
    mu: float = 1.0,
    gamma1: float = 10.0,
    gamma2: float = 10.0,
    clearance_cells: float = 1.0,
) -> StaticSolution:
    mesh = build_mesh(n_cells)
    cls = classify_elements(mesh, poly, clearance_cells * mesh.h)
    geom = build_cut_geometry(cls)
    dm = DofMap(cls)
    parts = assemble_system(geom, dm, mu, with_membrane=False)
    params = PenaltyParameters(mu=mu, h=mesh.h, gamma1=gamma1, gamma2=gamma2)
    A = parts.matrix(params)
    b = assemble_rhs_manufactured(parts, params, exact)
    x, rep = factor_system(A, dm).solve(b)
    return StaticSolution(dm, x, geom, params, rep.residual)


@dataclass
class ConvergenceRow:
    inv_h: int
    errors: dict[str, float]
    rates: dict[str, float | None] = field(default_factory=dict)


def rate(e_coarse: float, e_fine: float) -> float | None:
    """``log2(e_h / e_{h/2})``; ``None`` when undefined, ``inf`` for exact fine results."""
    if e_coarse == 0.0 and e_fine == 0.0:
        return None
    if e_fine == 0.0:
        return math.inf
    if e_coarse == 0.0:
        return None
    return math.log2(e_coarse / e_fine)


def add_rates(rows: list[ConvergenceRow]) -> list[ConvergenceRow]:
    for prev, row in zip(rows, rows[1:]):
        if row.inv_h != 2 * prev.inv_h:
            row.rates = {k: None for k in NORMS}
            continue
        row.rates = {k: rate(prev.errors[k], row.errors[k]) for k in NORMS}
    if rows:
        rows[0].rates = {k: None for k in NORMS}
    return rows


def convergence_table(
    n_list: Sequence[int],
    poly: InterfacePolygon,
    exact: ExactSolution,
    mu: float = 1.0,
    gamma1: float = 10.0,
    gamma2: float = 10.0,
    clearance_cells: float = 1.0,
) -> tuple[list[ConvergenceRow], list[ConvergenceRow]]:
    """Velocity and pressure rows for the strictly refining meshes ``n_list``."""
    n_list = list(n_list)
    if len(n_list) == 0 or any(b <= a for a, b in zip(n_list, n_list[1:])):
        raise ValueError(f"mesh list must be non-empty and strictly refining, got {n_list}")
    vel, pres = [], []
    for n in n_list:
        sol = solve_static(poly, n, exact, mu, gamma1, gamma2, clearance_cells)
        e = error_norms(sol.dofmap, sol.coeffs, sol.geom, exact)
        vel.append(ConvergenceRow(n, e.velocity))
        pres.append(ConvergenceRow(n, e.pressure))
    return add_rates(vel), add_rates(pres)


def fitted_rate(rows: Sequence[ConvergenceRow], norm: str) -> float:
    """Least-squares slope of ``-log2(error)`` against ``log2(1/h)``."""
    x = np.log2([r.inv_h for r in rows])
    y = np.log2([r.errors[norm] for r in rows])
    return float(-np.polyfit(x, y, 1)[0])


# --------------------------------------------------------------------------
# Richardson
# --------------------------------------------------------------------------
def richardson_ratio(d_coarse: float, d_fine: float) -> float | None:
    """``log2(|u_dt - u_dt/2| / |u_dt/2 - u_dt/4|)``; ``None`` when undefined."""
    if d_fine == 0.0 or d_coarse == 0.0 or not (math.isfinite(d_coarse) and math.isfinite(d_fine)):
        return None
    return math.log2(d_coarse / d_fine)


def _side_velocity(dm: DofMap, x, side, pts, elems):
    """Side velocity, falling back to the other side's field outside its elements."""
    own = dm.vel_dofs(side)[elems, 0] >= 0
    out = np.empty((len(pts), 2))
    if np.any(own):
        out[own] = eval_velocity(dm, x, side, pts[own], elems[own])
    if np.any(~own):
        out[~own] = eval_velocity(dm, x, 3 - side, pts[~own], elems[~own])
    return out


def l2_difference(geom: CutGeometry, a: tuple[DofMap, np.ndarray], b: tuple[DofMap, np.ndarray]) -> float:
    """``|u_a - u_b|_{L2}`` on the physical sides of ``geom``."""
    tot = 0.0
    for side in (1, 2):
        ps = geom.bulk(side)
        if len(ps) == 0:
            continue
        ua = _side_velocity(a[0], a[1], side, ps.points, ps.elem)
        ub = _side_velocity(b[0], b[1], side, ps.points, ps.elem)
        tot += ps.weights @ np.sum((ua - ub) ** 2, axis=1)
    return math.sqrt(tot)


# --------------------------------------------------------------------------
# traction and area
# --------------------------------------------------------------------------
def traction_at_midpoints(dm: DofMap, x: np.ndarray, side: int, mu: float, poly: InterfacePolygon | None = None):
    """``(s_{j+1/2}, (mu eps(u) - p I) n)`` at segment midpoints of the polygon the solve used."""
    poly = dm.cls.polygon if poly is None else poly
    mids = 0.5 * (poly.points + np.roll(poly.points, -1, axis=0))
    e1, e2 = vertex_elements(dm.cls, mids)
    el = e1 if side == 1 else e2
    n = poly.segment_normals()
    u, g = eval_velocity(dm, x, side, mids, el, grad=True)
    p = eval_pressure(dm, x, side, mids, el)
    eps = 0.5 * (g + np.swapaxes(g, 1, 2))
    t = mu * np.einsum("pij,pj->pi", eps, n) - p[:, None] * n
    s_mid = 0.5 * (poly.s[:-1] + poly.s[1:])
    return s_mid, t


def area_deviation(rows, t_probe: float, tol: float = 1e-9) -> float:
    for r in rows:
        if abs(r.t - t_probe) <= tol * max(1.0, abs(t_probe)):
            return r.area_deviation
    raise EvaluationError(f"no ledger row at t={t_probe}")


# --------------------------------------------------------------------------
# report files
# --------------------------------------------------------------------------
ENERGY_HEADER = ["n", "t", "kinetic", "elastic", "total", "slack", "area", "area_deviation"]
CONVERGENCE_HEADER = ["inv_h", "L2", "k_L2", "H1", "k_H1", "Linf", "k_Linf", "W1inf", "k_W1inf"]


def fmt(v) -> str:
    """Deterministic cell formatting; ``None`` becomes ``undefined``."""
    if v is None:
        return "undefined"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    v = float(v)
    if math.isnan(v):
        return "nan"
    if math.isinf(v):
        return "inf" if v > 0 else "-inf"
    return repr(v)


def write_csv(path: str | Path, header: Sequence[str], rows: Iterable[Sequence]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([fmt(v) for v in r])
    return path


def write_energy_csv(rows, path) -> Path:
    return write_csv(
        path,
        ENERGY_HEADER,
        ([r.n, r.t, r.kinetic, r.elastic, r.total, r.slack, r.area, r.area_deviation] for r in rows),
    )


def write_area_csv(rows, path) -> Path:
    return write_csv(path, ["n", "t", "area", "area_deviation"], ([r.n, r.t, r.area, r.area_deviation] for r in rows))


def write_convergence_csv(rows: Sequence[ConvergenceRow], path) -> Path:
    out = []
    for r in rows:
        line = [r.inv_h]
        for k in NORMS:
            line += [r.errors[k], r.rates.get(k)]
        out.append(line)
    return write_csv(path, CONVERGENCE_HEADER, out)


def _svg(path, body: str, view: str = "0 0 1 1", size: int = 480) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{size}" height="{size}" viewBox="{view}">\n'
        f"{body}</svg>\n"
    )
    return path


def write_interface_svg(polys: Sequence[InterfacePolygon], path, colors: Sequence[str] | None = None) -> Path:
    """Polygons in the unit square (``y`` flipped so the picture is upright)."""
    colors = colors or ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e"]
    body = ['<rect x="0" y="0" width="1" height="1" fill="none" stroke="#000" stroke-width="0.004"/>\n']
    for i, poly in enumerate(polys):
        pts = " ".join(f"{x:.6f},{1.0 - y:.6f}" for x, y in poly.closed_points)
        body.append(
            f'<polyline points="{pts}" fill="none" stroke="{colors[i % len(colors)]}" stroke-width="0.003"/>\n'
        )
    return _svg(path, "".join(body))


def write_series_svg(t: Sequence[float], y: Sequence[float], path, log_y: bool = False) -> Path:
    """Plain polyline of ``y(t)`` scaled into the unit box."""
    t = np.asarray(t, dtype=float)
    y = np.asarray(y, dtype=float)
    ok = np.isfinite(y) & ((y > 0) if log_y else True)
    t, y = t[ok], y[ok]
    if log_y:
        y = np.log10(y)
    if len(t) == 0:
        return _svg(path, "")
    tx = (t - t.min()) / max(np.ptp(t), 1e-300)
    yy = (y - y.min()) / max(np.ptp(y), 1e-300)
    pts = " ".join(f"{a:.6f},{1.0 - b:.6f}" for a, b in zip(0.05 + 0.9 * tx, 0.05 + 0.9 * yy))
    body = (
        '<rect x="0" y="0" width="1" height="1" fill="none" stroke="#000" stroke-width="0.004"/>\n'
        f'<polyline points="{pts}" fill="none" stroke="#1f77b4" stroke-width="0.004"/>\n'
    )
    return _svg(path, body)


def read_interface_csv(path) -> InterfacePolygon:
    data = np.loadtxt(path, delimiter=",", skiprows=1)
    return polygon_from_points(data[:-1, 2:4], L=float(data[-1, 1]))


# --------------------------------------------------------------------------
# field dumps
# --------------------------------------------------------------------------
def sample_fields(dm: DofMap, x: np.ndarray, poly: InterfacePolygon, n_samples: int | None = None):
    """Velocity and pressure on a uniform ``(k+1)^2`` grid, side chosen by polygon membership."""
    import shapely

    mesh = dm.mesh
    k = 2 * mesh.n if n_samples is None else int(n_samples)
    g = np.linspace(0.0, 1.0, k + 1)
    X, Y = np.meshgrid(g, g)
    pts = np.column_stack([X.ravel(), Y.ravel()])
    inside = shapely.contains_xy(poly.shapely_polygon(), pts[:, 0], pts[:, 1])
    el = mesh.element_of_point(pts)
    u = np.empty((len(pts), 2))
    p = np.empty(len(pts))
    side_of = np.where(inside, 2, 1)
    for side in (1, 2):
        sel = side_of == side
        own = sel & (dm.pres_dofs(side)[el, 0] >= 0)
        other = sel & ~own
        if np.any(own):
            u[own] = eval_velocity(dm, x, side, pts[own], el[own])
            p[own] = eval_pressure(dm, x, side, pts[own], el[own])
        if np.any(other):
            u[other] = eval_velocity(dm, x, 3 - side, pts[other], el[other])
            p[other] = eval_pressure(dm, x, 3 - side, pts[other], el[other])
    return pts, side_of, u, p, k


def write_fields_csv(path, dm: DofMap, x: np.ndarray, poly: InterfacePolygon) -> Path:
    pts, side, u, p, _ = sample_fields(dm, x, poly)
    return write_csv(path, ["x", "y", "side", "ux", "uy", "p"],
                     ([a, b, int(s), c, d, e] for (a, b), s, (c, d), e in zip(pts, side, u, p)))


def write_fields_vtk(path, dm: DofMap, x: np.ndarray, poly: InterfacePolygon) -> Path:
    """Legacy-VTK structured-points file with point data ``velocity``, ``pressure`` and ``side``."""
    pts, side, u, p, k = sample_fields(dm, x, poly)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    n = (k + 1) ** 2
    lines = [
        "# vtk DataFile Version 3.0",
        "cutfem-ib fields",
        "ASCII",
        "DATASET STRUCTURED_POINTS",
        f"DIMENSIONS {k + 1} {k + 1} 1",
        "ORIGIN 0 0 0",
        f"SPACING {1.0 / k!r} {1.0 / k!r} 1",
        f"POINT_DATA {n}",
        "VECTORS velocity double",
    ]
    lines += [f"{a!r} {b!r} 0" for a, b in u.tolist()]
    lines += ["SCALARS pressure double 1", "LOOKUP_TABLE default"]
    lines += [repr(v) for v in p.tolist()]
    lines += ["SCALARS side int 1", "LOOKUP_TABLE default"]
    lines += [str(int(s)) for s in side]
    path.write_text("\n".join(lines) + "\n")
    return path


def write_matrix(path, A) -> Path:
    import scipy.io

    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    scipy.io.mmwrite(str(path), A.tocoo(), precision=17)
    return path


def write_json(path, data: dict) -> Path:
    import json

    def _clean(v):
        if isinstance(v, dict):
            return {str(k): _clean(w) for k, w in v.items()}
        if isinstance(v, (list, tuple)):
            return [_clean(w) for w in v]
        if isinstance(v, (np.floating, float)):
            v = float(v)
            return v if math.isfinite(v) else None
        if isinstance(v, np.integer):
            return int(v)
        if isinstance(v, np.bool_):
            return bool(v)
        return v

    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(_clean(data), indent=2, sort_keys=True) + "\n")
    return path
