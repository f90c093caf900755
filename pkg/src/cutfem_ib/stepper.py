"""Explicit / semi-implicit time stepping of the fluid-membrane system.

Each step rebuilds the cut geometry on the current polygon, assembles and
solves the Stokes system, moves the polygon with the averaged vertex
velocities and books the energy terms of the discrete stability estimate.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .assembly import (
    DonorField,
    PenaltyParameters,
    SystemParts,
    assemble_rhs_dynamic,
    assemble_system,
)
from .config import RunConfig
from .errors import CutFEMError, EvaluationError, GeometryError, SingularMatrixError, StepFailure
from .interface import (
    InterfacePolygon,
    advect,
    enclosed_area,
    membrane_energy,
    sample_initial,
    segment_tangents,
)
from .mesh import Mesh, build_mesh, check_assumption1, classify_elements
from .quadrature import build_cut_geometry
from .solver import factor_system
from .spaces import DofMap, eval_velocity

log = logging.getLogger(__name__)


@dataclass(eq=False)
class DiscreteState:
    """Time level ``n``: polygon ``X^n`` and the velocity/pressure solved on ``X^{n-1}``.

    ``dofmap`` is ``None`` at ``n = 0`` (fluid at rest, no solve yet).
    """

    n: int
    t: float
    polygon: InterfacePolygon
    coeffs: np.ndarray | None = None
    dofmap: DofMap | None = None
    parts: SystemParts | None = None

    def kinetic(self) -> float:
        if self.coeffs is None:
            return 0.0
        return 0.5 * float(self.coeffs @ (self.parts.mass @ self.coeffs))

    def donor(self) -> DonorField | None:
        if self.coeffs is None:
            return None
        return DonorField(self.dofmap, self.coeffs)


@dataclass
class EnergyLedgerRow:
    n: int
    t: float
    kinetic: float
    elastic: float
    area: float
    area_deviation: float
    slack: float = math.nan
    # increment terms of step n-1 -> n (nan on the initial row)
    velocity_change: float = math.nan
    tangent_change: float = math.nan
    strain: float = math.nan
    iface_jump: float = math.nan
    bdry_trace: float = math.nan
    iface_normal_jump: float = math.nan
    bdry_normal: float = math.nan
    ghost_u: float = math.nan
    ghost_p: float = math.nan
    transfer: float = math.nan
    identity_residual: float = math.nan
    membrane_diag: float = math.nan
    solve_residual: float = math.nan

    @property
    def total(self) -> float:
        return self.kinetic + self.elastic

    def as_dict(self) -> dict:
        d = dict(self.__dict__)
        d["total"] = self.total
        return d


@dataclass
class StepResult:
    state: DiscreteState
    row: EnergyLedgerRow
    vertex_velocity: np.ndarray


@dataclass
class Trajectory:
    config: RunConfig
    rows: list[EnergyLedgerRow] = field(default_factory=list)
    snapshots: dict[int, InterfacePolygon] = field(default_factory=dict)
    final: DiscreteState | None = None
    status: str = "completed"
    message: str = ""
    failed_step: int | None = None
    assumption1_failures: int = 0

    @property
    def e0(self) -> float:
        return self.rows[0].total if self.rows else math.nan

    def centroids(self) -> np.ndarray:
        return np.array([self.snapshots[k].centroid() for k in sorted(self.snapshots)])


def initial_state(cfg: RunConfig) -> DiscreteState:
    poly = sample_initial(cfg.curve_spec(), cfg.h)
    return DiscreteState(0, 0.0, poly)


def energy(state: DiscreteState, kappa: float, area0: float | None = None) -> EnergyLedgerRow:
    """Kinetic, elastic and area bookkeeping of one time level."""
    area = enclosed_area(state.polygon)
    a0 = area if area0 is None else area0
    return EnergyLedgerRow(
        n=state.n,
        t=state.t,
        kinetic=state.kinetic(),
        elastic=membrane_energy(state.polygon, kappa),
        area=area,
        area_deviation=(area - a0) / a0,
    )


def _quad(M, x) -> float:
    return float(x @ (M @ x))


def theorem_check(
    prev: EnergyLedgerRow,
    row: EnergyLedgerRow,
    params: PenaltyParameters,
) -> float:
    """Slack of the per-step stability inequality (``RHS - E^{n+1}``), as printed.

    The right-hand side is ``E^n - |du|^2/2 + kappa |dX'|^2/2 + dt * (penalties)``
    with the increment terms already stored on ``row``.
    """
    rhs = (
        prev.total
        - 0.5 * row.velocity_change
        + 0.5 * params.kappa * row.tangent_change
        + params.dt
        * (
            params.pen1 * (row.iface_jump + row.bdry_trace)
            + params.gamma2 * params.h / params.dt * (row.iface_normal_jump + row.bdry_normal)
            + params.gamma_u * row.ghost_u
            + params.gamma_p * row.ghost_p
        )
    )
    return rhs - row.total


def step(state: DiscreteState, cfg: RunConfig, mesh: Mesh | None = None, area0: float | None = None,
         prev_row: EnergyLedgerRow | None = None) -> StepResult:
    """Advance ``state`` by one time step of size ``cfg.dt``."""
    k = state.n + 1
    mesh = build_mesh(cfg.n_cells) if mesh is None else mesh
    params = cfg.penalty()
    try:
        cls = classify_elements(mesh, state.polygon, cfg.clearance)
        geom = build_cut_geometry(cls)
        dm = DofMap(cls)
        parts = assemble_system(geom, dm, cfg.mu, with_membrane=bool(cfg.nu))
        A = parts.matrix(params)
        rhs, donors = assemble_rhs_dynamic(parts, params, state.donor(), step=k)
        x, report = factor_system(A, dm).solve(rhs)
    except StepFailure:
        raise
    except (GeometryError, EvaluationError, SingularMatrixError) as exc:
        raise StepFailure(str(exc), k) from exc

    vel = (parts.vertex_avg @ x).reshape(-1, 2)
    try:
        new_poly = advect(state.polygon, vel, cfg.dt, clearance=cfg.clearance, max_move=cfg.max_move)
    except StepFailure as exc:
        raise StepFailure(str(exc), k) from exc
    except GeometryError as exc:
        raise StepFailure(str(exc), k) from exc

    new = DiscreteState(k, k * cfg.dt, new_poly, x, dm, parts)
    row = energy(new, cfg.kappa, area0)
    row.solve_residual = report.residual

    # increment terms
    du2 = 0.0
    ut2 = 0.0
    for side in (1, 2):
        ps = geom.bulk(side)
        if len(ps) == 0:
            continue
        u = eval_velocity(dm, x, side, ps.points, ps.elem)
        ut = donors.get(side, np.zeros_like(u))
        du2 += float(ps.weights @ np.sum((u - ut) ** 2, axis=1))
        ut2 += float(ps.weights @ np.sum(ut**2, axis=1))
    t_old = segment_tangents(state.polygon)
    t_new = segment_tangents(new_poly)
    row.velocity_change = du2
    row.tangent_change = float(np.sum(np.sum((t_new - t_old) ** 2, axis=1) * state.polygon.ds))

    xu = x.copy()
    xu[dm.n_velocity :] = 0.0
    xp = x - xu
    xp[dm.mean_dof] = 0.0
    row.strain = _quad(parts.stokes, xu)
    row.iface_jump = _quad(parts.iface_pen1, xu)
    row.bdry_trace = _quad(parts.bdry_pen1, xu)
    row.iface_normal_jump = _quad(parts.iface_pen2, xu)
    row.bdry_normal = _quad(parts.bdry_pen2, xu)
    row.ghost_u = _quad(parts.ghost_u, xu)
    row.ghost_p = _quad(parts.ghost_p, xp)
    nitsche = _quad(parts.iface, xu) + _quad(parts.bdry, xu)
    memb = _quad(parts.membrane, xu) if cfg.nu else float(np.sum(
        np.sum(np.diff(np.vstack([vel, vel[:1]]), axis=0) ** 2, axis=1) / state.polygon.ds))
    row.membrane_diag = memb * cfg.kappa * cfg.dt / 2.0

    prev = energy(state, cfg.kappa, area0) if prev_row is None else prev_row
    # the kinetic energy transferred onto the new partition differs from E^n by quadrature
    row.transfer = 0.5 * ut2 - prev.kinetic
    dissipation = (
        row.strain + nitsche
        + params.pen1 * (row.iface_jump + row.bdry_trace)
        + params.pen2 * (row.iface_normal_jump + row.bdry_normal)
        + params.gamma_u * row.ghost_u
        + params.gamma_p * row.ghost_p
    )
    if cfg.nu:
        row.identity_residual = (
            0.5 * ut2 + prev.elastic
            - row.total
            - 0.5 * du2
            - 0.5 * cfg.kappa * row.tangent_change
            - cfg.dt * dissipation
        )
        row.slack = theorem_check(prev, row, params)
    return StepResult(new, row, vel)


def run(cfg: RunConfig, on_step=None) -> Trajectory:
    """Integrate to ``cfg.t_final`` or the first failure.

    For the explicit scheme (``nu = 0``) an energy above ``blowup_factor * E^0``
    or a geometric breakdown ends the run with status ``"unstable"``.  The same
    events in the semi-implicit scheme give status ``"failed"``.
    """
    mesh = build_mesh(cfg.n_cells)
    state = initial_state(cfg)
    traj = Trajectory(cfg)
    area0 = enclosed_area(state.polygon)
    row = energy(state, cfg.kappa, area0)
    row.slack = math.nan
    traj.rows.append(row)
    snap_steps = _snapshot_steps(cfg)
    traj.snapshots[0] = state.polygon
    e0 = row.total
    for k in range(1, cfg.n_steps + 1):
        try:
            res = step(state, cfg, mesh, area0, prev_row=traj.rows[-1])
        except CutFEMError as exc:
            traj.failed_step = getattr(exc, "step", None) or k
            traj.message = str(exc)
            traj.status = "unstable" if cfg.nu == 0 else "failed"
            log.warning("%s", exc)
            break
        state = res.state
        traj.rows.append(res.row)
        if k in snap_steps:
            traj.snapshots[k] = state.polygon
        if on_step is not None:
            on_step(res)
        rep = check_assumption1(state.parts.dofmap.cls) if state.parts is not None else None
        if rep is not None and not rep.satisfied:
            traj.assumption1_failures += 1
        if not math.isfinite(res.row.total) or res.row.total > cfg.blowup_factor * max(e0, 1e-300):
            traj.failed_step = k
            traj.message = f"step {k}: energy {res.row.total:.4e} exceeds {cfg.blowup_factor:g} * E0"
            traj.status = "unstable"
            break
    traj.final = state
    if state.n not in traj.snapshots:
        traj.snapshots[state.n] = state.polygon
    return traj


def _snapshot_steps(cfg: RunConfig) -> set[int]:
    steps = {int(round(t / cfg.dt)) for t in cfg.snapshot_times}
    if cfg.snapshot_every:
        steps |= set(range(0, cfg.n_steps + 1, cfg.snapshot_every))
    steps.add(cfg.n_steps)
    return {s for s in steps if 0 <= s <= cfg.n_steps}


def chord_variance(poly: InterfacePolygon) -> float:
    return float(np.var(poly.chord_lengths()))
