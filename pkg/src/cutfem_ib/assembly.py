"""Sparse assembly of the stabilized Nitsche/CutFEM saddle-point system.

Every bilinear contribution is assembled into its own sparse matrix (see
:class:`SystemParts`) and combined with the penalty scalings afterwards.  This
keeps the individual quadratic forms available for the energy bookkeeping.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
import scipy.sparse as sp
import shapely

from .errors import EvaluationError, StepFailure
from .interface import InterfacePolygon, force_coefficients
from .mesh import ElementClassification, Mesh
from .quadrature import GAUSS3_POINTS, GAUSS3_WEIGHTS, CutGeometry, PointSet, square_rule
from .spaces import DofMap, eval_velocity, p1_shape, q2_tabulate, ref_coords


@dataclass(frozen=True)
class PenaltyParameters:
    """Physical and penalty scalars of one solve.

    ``dt=None`` (or ``static=True``) selects the steady problem: no mass term,
    no ``gamma2 h / dt`` penalties and ``gamma_p = 1 / (4 gamma1 mu)``.
    """

    mu: float
    h: float
    dt: float | None = None
    kappa: float = 0.0
    gamma1: float = 10.0
    gamma2: float = 10.0
    nu: int = 1

    @property
    def static(self) -> bool:
        return self.dt is None

    @property
    def gamma_u(self) -> float:
        if self.static:
            return self.gamma1 * self.mu
        return self.gamma1 * self.mu + self.gamma2 * self.h**2 / self.dt

    @property
    def gamma_p(self) -> float:
        if self.static:
            return 1.0 / (4.0 * self.gamma1 * self.mu)
        return min(1.0 / (4.0 * self.gamma1 * self.mu), self.dt / (4.0 * self.gamma2 * self.h**2))

    @property
    def pen1(self) -> float:
        return self.gamma1 * self.mu / self.h

    @property
    def pen2(self) -> float:
        return 0.0 if self.static else self.gamma2 * self.h / self.dt


# --------------------------------------------------------------------------
# per-point dof tables
# --------------------------------------------------------------------------
def _vel_values(val: np.ndarray) -> np.ndarray:
    V = np.zeros(val.shape[:1] + (18, 2))
    V[:, :9, 0] = val
    V[:, 9:, 1] = val
    return V


def _vel_grads(gx: np.ndarray, gy: np.ndarray) -> np.ndarray:
    """``(P, 18, 2, 2)`` gradients ``[dof, component, derivative]``."""
    G = np.zeros(gx.shape[:1] + (18, 2, 2))
    G[:, :9, 0, 0] = gx
    G[:, :9, 0, 1] = gy
    G[:, 9:, 1, 0] = gx
    G[:, 9:, 1, 1] = gy
    return G


def _sym(G: np.ndarray) -> np.ndarray:
    return 0.5 * (G + np.swapaxes(G, -1, -2))




class _Triplets:
    def __init__(self, n: int):
        self.n = n
        self.rows: list[np.ndarray] = []
        self.cols: list[np.ndarray] = []
        self.vals: list[np.ndarray] = []

    def add(self, rdofs: np.ndarray, cdofs: np.ndarray, vals: np.ndarray) -> None:
        """``vals[g, a, b]`` goes to ``(rdofs[g, a], cdofs[g, b])``."""
        if len(vals) == 0:
            return
        r = np.broadcast_to(rdofs[:, :, None], vals.shape)
        c = np.broadcast_to(cdofs[:, None, :], vals.shape)
        self.rows.append(r.ravel())
        self.cols.append(c.ravel())
        self.vals.append(vals.ravel())

    def tocsr(self) -> sp.csr_matrix:
        if not self.vals:
            return sp.csr_matrix((self.n, self.n))
        r = np.concatenate(self.rows)
        c = np.concatenate(self.cols)
        v = np.concatenate(self.vals)
        keep = v != 0.0
        return sp.coo_matrix((v[keep], (r[keep], c[keep])), shape=(self.n, self.n)).tocsr()


# --------------------------------------------------------------------------
# bulk terms
# --------------------------------------------------------------------------
def _bulk_point_mats(tab, psi, w, mu):
    """Per-point mass (18x18), strain (18x18) and divergence (3x18) contributions."""
    V = _vel_values(tab.val)
    E = _sym(_vel_grads(tab.dx, tab.dy))
    div = np.concatenate([tab.dx, tab.dy], axis=1)
    mass = np.einsum("p,pda,pea->pde", w, V, V)
    stiff = mu * np.einsum("p,pdij,peij->pde", w, E, E)
    bdiv = -np.einsum("p,pk,pd->pkd", w, psi, div)
    return mass, stiff, bdiv


@lru_cache(maxsize=32)
def _reference_bulk(h: float, mu: float):
    ref, w = square_rule()
    tab = q2_tabulate(ref, h)
    psi = p1_shape(np.array([[0.5, 0.5]]) * h, h, ref * h)
    mass, stiff, bdiv = _bulk_point_mats(tab, psi, w * h * h, mu)
    return mass.sum(0), stiff.sum(0), bdiv.sum(0)


def _assemble_bulk(geom: CutGeometry, dm: DofMap, mu: float):
    n = dm.n_total
    mesh = geom.mesh
    mass_t, stokes_t = _Triplets(n), _Triplets(n)
    mean_col = np.zeros(n)
    Mref, Sref, Bref = _reference_bulk(mesh.h, mu)
    for side in (1, 2):
        vd, pd = dm.vel_dofs(side), dm.pres_dofs(side)
        elems = np.flatnonzero(geom.cls.interior(side))
        ne = len(elems)
        if ne:
            mass_t.add(vd[elems], vd[elems], np.broadcast_to(Mref, (ne, 18, 18)))
            stokes_t.add(vd[elems], vd[elems], np.broadcast_to(Sref, (ne, 18, 18)))
            stokes_t.add(pd[elems], vd[elems], np.broadcast_to(Bref, (ne, 3, 18)))
            stokes_t.add(vd[elems], pd[elems], np.broadcast_to(Bref.T, (ne, 18, 3)))
            mean_col[pd[elems][:, 0]] += mesh.h**2
        cb = geom.cut_bulk[side - 1]
        if len(cb):
            tab = q2_tabulate(ref_coords(mesh, cb.points, cb.elem), mesh.h)
            psi = p1_shape(mesh.centers[cb.elem], mesh.h, cb.points)
            mass, stiff, bdiv = _bulk_point_mats(tab, psi, cb.weights, mu)
            starts, (ms, ss, bs) = _group_sum_many((mass, stiff, bdiv), cb.elem)
            e = cb.elem[starts]
            mass_t.add(vd[e], vd[e], ms)
            stokes_t.add(vd[e], vd[e], ss)
            stokes_t.add(pd[e], vd[e], bs)
            stokes_t.add(vd[e], pd[e], np.swapaxes(bs, 1, 2))
            np.add.at(mean_col, pd[cb.elem].ravel(), (cb.weights[:, None] * psi).ravel())
    return mass_t.tocsr(), stokes_t.tocsr(), mean_col


def _group_sum_many(arrays, keys):
    starts = np.flatnonzero(np.r_[True, keys[1:] != keys[:-1]])
    return starts, [np.add.reduceat(a, starts, axis=0) for a in arrays]


# --------------------------------------------------------------------------
# interface and boundary (Nitsche) terms
# --------------------------------------------------------------------------
def _side_tables(mesh: Mesh, pts, elems, normals, mu):
    tab = q2_tabulate(ref_coords(mesh, pts, elems), mesh.h)
    V = _vel_values(tab.val)
    T = mu * np.einsum("pdij,pj->pdi", _sym(_vel_grads(tab.dx, tab.dy)), normals)
    P = p1_shape(mesh.centers[elems], mesh.h, pts)
    return V, T, P


def interface_tables(geom: CutGeometry, dm: DofMap, mu: float):
    """Per-point jump/average tables on the 42 local dofs ``[u1 p1 | u2 p2]``."""
    q = geom.interface
    mesh = geom.mesh
    nq = len(q)
    V1, T1, P1 = _side_tables(mesh, q.points, q.elem1, q.normals, mu)
    V2, T2, P2 = _side_tables(mesh, q.points, q.elem2, q.normals, mu)
    JV = np.zeros((nq, 42, 2))
    JV[:, :18] = V1
    JV[:, 21:39] = -V2
    AV = np.zeros((nq, 42, 2))
    AV[:, :18] = 0.5 * V1
    AV[:, 21:39] = 0.5 * V2
    AT = np.zeros((nq, 42, 2))
    AT[:, :18] = 0.5 * T1
    AT[:, 21:39] = 0.5 * T2
    AP = np.zeros((nq, 42))
    AP[:, 18:21] = 0.5 * P1
    AP[:, 39:42] = 0.5 * P2
    JN = np.einsum("pda,pa->pd", JV, q.normals)
    dofs = np.hstack([dm.local_dofs(1)[q.elem1], dm.local_dofs(2)[q.elem2]])
    if np.any(dofs < 0):
        raise EvaluationError("interface point outside the support of one of the subdomain spaces")
    return dict(JV=JV, AV=AV, AT=AT, AP=AP, JN=JN, dofs=dofs)


def _assemble_interface(geom: CutGeometry, dm: DofMap, mu: float):
    n = dm.n_total
    q = geom.interface
    cons, pen1, pen2 = _Triplets(n), _Triplets(n), _Triplets(n)
    if len(q) == 0:
        return cons.tocsr(), pen1.tocsr(), pen2.tocsr()
    t = interface_tables(geom, dm, mu)
    w = q.weights
    JV, AT, AP, JN = t["JV"], t["AT"], t["AP"], t["JN"]
    kc = -np.einsum("p,pda,pea->pde", w, JV, AT)
    kc = kc + np.swapaxes(kc, 1, 2)
    kp = np.einsum("p,pd,pe->pde", w, JN, AP)
    kc += kp + np.swapaxes(kp, 1, 2)
    k1 = np.einsum("p,pda,pea->pde", w, JV, JV)
    k2 = np.einsum("p,pd,pe->pde", w, JN, JN)
    key = q.elem1 * geom.mesh.n_elements + q.elem2
    starts, (kc, k1, k2) = _group_sum_many((kc, k1, k2), key)
    d = t["dofs"][starts]
    cons.add(d, d, kc)
    pen1.add(d, d, k1)
    pen2.add(d, d, k2)
    return cons.tocsr(), pen1.tocsr(), pen2.tocsr()


def boundary_tables(geom: CutGeometry, dm: DofMap, mu: float):
    b = geom.boundary
    V, T, P = _side_tables(geom.mesh, b.points, b.elem, geom.boundary_normals, mu)
    dofs = dm.local_dofs(1)[b.elem]
    if np.any(dofs < 0):
        raise EvaluationError("outer boundary touches elements without side-1 dofs")
    Vf = np.zeros((len(b), 21, 2))
    Vf[:, :18] = V
    Tf = np.zeros((len(b), 21, 2))
    Tf[:, :18] = T
    Pf = np.zeros((len(b), 21))
    Pf[:, 18:] = P
    VN = np.einsum("pda,pa->pd", Vf, geom.boundary_normals)
    return dict(V=Vf, T=Tf, P=Pf, VN=VN, dofs=dofs)


def _assemble_boundary(geom: CutGeometry, dm: DofMap, mu: float):
    n = dm.n_total
    t = boundary_tables(geom, dm, mu)
    w = geom.boundary.weights
    kc = -np.einsum("p,pda,pea->pde", w, t["V"], t["T"])
    kc = kc + np.swapaxes(kc, 1, 2)
    kp = np.einsum("p,pd,pe->pde", w, t["VN"], t["P"])
    kc += kp + np.swapaxes(kp, 1, 2)
    k1 = np.einsum("p,pda,pea->pde", w, t["V"], t["V"])
    k2 = np.einsum("p,pd,pe->pde", w, t["VN"], t["VN"])
    # consecutive boundary points share an edge, hence an element
    starts, (kc, k1, k2) = _group_sum_many((kc, k1, k2), np.arange(len(w)) // 3)
    d = t["dofs"][starts]
    out = []
    for k in (kc, k1, k2):
        tr = _Triplets(n)
        tr.add(d, d, k)
        out.append(tr.tocsr())
    return tuple(out)


# --------------------------------------------------------------------------
# ghost penalties
# --------------------------------------------------------------------------
def _ghost_face_points(axis: int):
    """Reference coordinates of face quadrature in K (left/below) and K' (right/above)."""
    t = GAUSS3_POINTS
    if axis == 0:
        rk = np.column_stack([np.ones(3), t])
        rkp = np.column_stack([np.zeros(3), t])
    else:
        rk = np.column_stack([t, np.ones(3)])
        rkp = np.column_stack([t, np.zeros(3)])
    return rk, rkp


def _flux_tables(tab, axis: int):
    """``eps(v) n_F`` and its normal derivative for the 18 velocity dofs."""
    n = np.array([1.0, 0.0]) if axis == 0 else np.array([0.0, 1.0])
    E0 = _sym(_vel_grads(tab.dx, tab.dy))
    if axis == 0:
        E1 = _sym(_vel_grads(tab.dxx, tab.dxy))
    else:
        E1 = _sym(_vel_grads(tab.dxy, tab.dyy))
    return E0 @ n, E1 @ n


@lru_cache(maxsize=32)
def ghost_face_matrices(h: float):
    """Face matrices (velocity 36x36, pressure 6x6) for vertical (0) and horizontal (1) faces."""
    out = {}
    w = GAUSS3_WEIGHTS * h
    for axis in (0, 1):
        rk, rkp = _ghost_face_points(axis)
        q0k, q1k = _flux_tables(q2_tabulate(rk, h), axis)
        q0p, q1p = _flux_tables(q2_tabulate(rkp, h), axis)
        J0 = np.concatenate([q0k, -q0p], axis=1)
        J1 = np.concatenate([q1k, -q1p], axis=1)
        Ku = h * np.einsum("p,pda,pea->de", w, J0, J0) + h**3 * np.einsum(
            "p,pda,pea->de", w, J1, J1
        )
        # pressure: values and normal derivative of the centered monomials
        ck = np.array([[0.5, 0.5]]) * h
        pk = p1_shape(ck, h, rk * h)
        pkp = p1_shape(ck, h, rkp * h)
        P0 = np.concatenate([pk, -pkp], axis=1)
        dn = np.zeros(3)
        dn[1 + axis] = 1.0 / h
        P1 = np.concatenate([dn, -dn])
        Kp = h * np.einsum("p,pd,pe->de", w, P0, P0) + h**3 * w.sum() * np.outer(P1, P1)
        out[axis] = (Ku, Kp)
    return out


def _assemble_ghost(geom: CutGeometry, dm: DofMap):
    n = dm.n_total
    mesh = geom.mesh
    mats = ghost_face_matrices(mesh.h)
    tu, tp = _Triplets(n), _Triplets(n)
    for side in (1, 2):
        faces = geom.cls.ghost_faces(side)
        pairs = mesh.inner_faces[faces]
        axes = mesh.inner_face_axis[faces]
        vd, pd = dm.vel_dofs(side), dm.pres_dofs(side)
        for axis in (0, 1):
            sel = pairs[axes == axis]
            if len(sel) == 0:
                continue
            Ku, Kp = mats[axis]
            du = np.hstack([vd[sel[:, 0]], vd[sel[:, 1]]])
            dp = np.hstack([pd[sel[:, 0]], pd[sel[:, 1]]])
            tu.add(du, du, np.broadcast_to(Ku, (len(sel),) + Ku.shape))
            tp.add(dp, dp, np.broadcast_to(Kp, (len(sel),) + Kp.shape))
    return tu.tocsr(), tp.tocsr()


# --------------------------------------------------------------------------
# membrane coupling
# --------------------------------------------------------------------------
def vertex_elements(cls: ElementClassification, pts: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Lowest-index element containing each point within the side-1 / side-2 element sets."""
    mesh = cls.mesh
    act1, act2 = cls.active(1), cls.active(2)
    e1 = np.empty(len(pts), dtype=int)
    e2 = np.empty(len(pts), dtype=int)
    guess = mesh.element_of_point(pts)
    for j, x in enumerate(pts):
        g = guess[j]
        if act1[g] and act2[g] and _strictly_inside(mesh, g, x):
            e1[j] = e2[j] = g
            continue
        cands = mesh.elements_containing(x)
        c1 = [e for e in cands if act1[e]]
        c2 = [e for e in cands if act2[e]]
        if not c1 or not c2:
            raise EvaluationError(f"interface vertex {j} at {x} is not inside a cut element")
        e1[j], e2[j] = c1[0], c2[0]
    return e1, e2


def _strictly_inside(mesh: Mesh, e: int, x: np.ndarray, tol: float = 1e-9) -> bool:
    r = (x - mesh.origins[e]) / mesh.h
    return bool(np.all(r > tol) and np.all(r < 1 - tol))


def vertex_average_operator(cls: ElementClassification, dm: DofMap, pts: np.ndarray) -> sp.csr_matrix:
    """Sparse ``(2m, N)`` operator mapping coefficients to ``{u(X_j)}`` (rows ``2j + c``)."""
    mesh = cls.mesh
    e1, e2 = vertex_elements(cls, pts)
    m = len(pts)
    rows, cols, vals = [], [], []
    for side, e in ((1, e1), (2, e2)):
        val = q2_tabulate(ref_coords(mesh, pts, e), mesh.h).val
        vd = dm.vel_dofs(side)[e]
        for c in (0, 1):
            rows.append(np.repeat(2 * np.arange(m) + c, 9))
            cols.append(vd[:, 9 * c : 9 * c + 9].ravel())
            vals.append(0.5 * val.ravel())
    return sp.coo_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(2 * m, dm.n_total),
    ).tocsr()


def membrane_matrix(poly: InterfacePolygon, avg: sp.csr_matrix) -> sp.csr_matrix:
    """``sum_j (D_j u) . (D_j v) / (s_{j+1} - s_j)``, ``D_j u = {u(X_{j+1})} - {u(X_j)}``."""
    m = poly.m
    j = np.arange(m)
    jn = (j + 1) % m
    diff = sp.coo_matrix(
        (
            np.concatenate([np.ones(2 * m), -np.ones(2 * m)]),
            (
                np.concatenate([2 * j, 2 * j + 1, 2 * j, 2 * j + 1]),
                np.concatenate([2 * jn, 2 * jn + 1, 2 * j, 2 * j + 1]),
            ),
        ),
        shape=(2 * m, 2 * m),
    ).tocsr()
    D = diff @ avg
    wts = sp.diags(np.repeat(1.0 / poly.ds, 2))
    return (D.T @ wts @ D).tocsr()


# --------------------------------------------------------------------------
# system container
# --------------------------------------------------------------------------
@dataclass(eq=False)
class SystemParts:
    """Named, unscaled bilinear forms on the global dof vector."""

    dofmap: DofMap
    geom: CutGeometry
    mass: sp.csr_matrix
    stokes: sp.csr_matrix
    iface: sp.csr_matrix
    iface_pen1: sp.csr_matrix
    iface_pen2: sp.csr_matrix
    bdry: sp.csr_matrix
    bdry_pen1: sp.csr_matrix
    bdry_pen2: sp.csr_matrix
    ghost_u: sp.csr_matrix
    ghost_p: sp.csr_matrix
    mean: sp.csr_matrix
    vertex_avg: sp.csr_matrix
    membrane: sp.csr_matrix
    extras: dict = field(default_factory=dict)

    def velocity_block(self, params: PenaltyParameters) -> sp.csr_matrix:
        """All velocity-velocity terms (the top-left block) as a full-size matrix."""
        A = self.matrix(params, include_pressure=False)
        n_u = self.dofmap.n_velocity
        return A[:n_u, :n_u]

    def matrix(self, params: PenaltyParameters, include_pressure: bool = True) -> sp.csr_matrix:
        p = params
        A = self.stokes + self.iface + self.bdry
        A = A + p.pen1 * (self.iface_pen1 + self.bdry_pen1)
        if not p.static:
            A = A + (1.0 / p.dt) * self.mass
            A = A + p.pen2 * (self.iface_pen2 + self.bdry_pen2)
            if p.nu:
                A = A + (p.nu * p.kappa * p.dt) * self.membrane
        A = A + p.gamma_u * self.ghost_u
        if include_pressure:
            A = A - p.gamma_p * self.ghost_p + self.mean
        return A.tocsr()


def assemble_system(geom: CutGeometry, dm: DofMap, mu: float, with_membrane: bool = True) -> SystemParts:
    mass, stokes, mean_col = _assemble_bulk(geom, dm, mu)
    iface, ip1, ip2 = _assemble_interface(geom, dm, mu)
    bdry, bp1, bp2 = _assemble_boundary(geom, dm, mu)
    gu, gp = _assemble_ghost(geom, dm)
    n = dm.n_total
    nz = np.flatnonzero(mean_col)
    mean = sp.coo_matrix(
        (
            np.concatenate([mean_col[nz], mean_col[nz]]),
            (np.concatenate([nz, np.full(len(nz), dm.mean_dof)]), np.concatenate([np.full(len(nz), dm.mean_dof), nz])),
        ),
        shape=(n, n),
    ).tocsr()
    poly = geom.polygon
    avg = vertex_average_operator(geom.cls, dm, poly.points)
    memb = membrane_matrix(poly, avg) if with_membrane else sp.csr_matrix((n, n))
    return SystemParts(
        dofmap=dm, geom=geom, mass=mass, stokes=stokes, iface=iface, iface_pen1=ip1,
        iface_pen2=ip2, bdry=bdry, bdry_pen1=bp1, bdry_pen2=bp2, ghost_u=gu, ghost_p=gp,
        mean=mean, vertex_avg=avg, membrane=memb,
        extras={"mean_col": mean_col},
    )


# --------------------------------------------------------------------------
# right-hand sides
# --------------------------------------------------------------------------
def _scatter_bulk_rhs(rhs, mesh, dm, side, pset: PointSet, fvals: np.ndarray) -> None:
    """Add ``sum_q w_q f(x_q) . phi_d(x_q)`` for all side velocity dofs."""
    if len(pset) == 0:
        return
    val = q2_tabulate(ref_coords(mesh, pset.points, pset.elem), mesh.h).val
    vd = dm.vel_dofs(side)[pset.elem]
    wf = pset.weights[:, None] * fvals
    contrib = np.concatenate([val * wf[:, :1], val * wf[:, 1:2]], axis=1)
    rhs += np.bincount(vd.ravel(), contrib.ravel(), minlength=len(rhs))


@dataclass(frozen=True, eq=False)
class DonorField:
    """Previous-step solution with the geometry it was solved on."""

    dofmap: DofMap
    coeffs: np.ndarray

    @property
    def cls(self) -> ElementClassification:
        return self.dofmap.cls


def donor_velocity(geom: CutGeometry, side: int, donor: DonorField, step: int | None = None):
    """Previous velocity at the current side-``side`` bulk points.

    A point takes the old side-1 field if it lies outside the old polygon and
    the old side-2 field otherwise (boundary ties go to side 1).
    """
    pset = geom.bulk(side)
    old_cls = donor.cls
    labels = old_cls.labels[pset.elem]
    old_side = np.where(labels == 1, 2, 1)
    cut = labels == 2
    if np.any(cut):
        poly = old_cls.polygon.shapely_polygon()
        shapely.prepare(poly)
        ins = shapely.contains_xy(poly, pset.points[cut, 0], pset.points[cut, 1])
        old_side[cut] = np.where(ins, 2, 1)
    vals = np.zeros((len(pset), 2))
    for s in (1, 2):
        sel = old_side == s
        if not np.any(sel):
            continue
        try:
            vals[sel] = eval_velocity(donor.dofmap, donor.coeffs, s, pset.points[sel], pset.elem[sel])
        except EvaluationError as exc:
            raise StepFailure(f"previous velocity undefined at a quadrature point ({exc})", step) from exc
    return vals


def assemble_rhs_dynamic(
    parts: SystemParts,
    params: PenaltyParameters,
    donor: DonorField | None,
    step: int | None = None,
) -> tuple[np.ndarray, dict]:
    """``(1/dt)(u~, v) + sum_j G_j . {v(X_j)}``; returns rhs and donor values per side."""
    geom, dm = parts.geom, parts.dofmap
    rhs = np.zeros(dm.n_total)
    donors = {}
    if donor is not None:
        for side in (1, 2):
            vals = donor_velocity(geom, side, donor, step)
            donors[side] = vals
            _scatter_bulk_rhs(rhs, geom.mesh, dm, side, geom.bulk(side), vals / params.dt)
    if params.kappa != 0.0:
        G = force_coefficients(geom.polygon, params.kappa)
        rhs += parts.vertex_avg.T @ G.ravel()
    return rhs, donors


def assemble_rhs_manufactured(parts: SystemParts, params: PenaltyParameters, exact) -> np.ndarray:
    """Right-hand side of the steady problem with the manufactured solution ``exact``."""
    geom, dm = parts.geom, parts.dofmap
    mesh = geom.mesh
    mu = params.mu
    rhs = np.zeros(dm.n_total)
    for side in (1, 2):
        pset = geom.bulk(side)
        f = exact.f(side, pset.points[:, 0], pset.points[:, 1])
        _scatter_bulk_rhs(rhs, mesh, dm, side, pset, f)

    q = geom.interface
    if len(q):
        t = interface_tables(geom, dm, mu)
        x, y = q.points.T
        gJ = exact.u(1, x, y) - exact.u(2, x, y)
        gN = exact.traction(1, x, y, q.normals, mu) - exact.traction(2, x, y, q.normals, mu)
        gJn = np.einsum("pa,pa->p", gJ, q.normals)
        loc = (
            np.einsum("pa,pda->pd", gN, t["AV"])
            + params.pen1 * np.einsum("pa,pda->pd", gJ, t["JV"])
            + params.pen2 * gJn[:, None] * t["JN"]
            - np.einsum("pa,pda->pd", gJ, t["AT"])
            + gJn[:, None] * t["AP"]
        )
        rhs += np.bincount(t["dofs"].ravel(), (q.weights[:, None] * loc).ravel(), minlength=dm.n_total)

    b = geom.boundary
    t = boundary_tables(geom, dm, mu)
    gD = exact.u(1, b.points[:, 0], b.points[:, 1])
    gDn = np.einsum("pa,pa->p", gD, geom.boundary_normals)
    loc = (
        -np.einsum("pa,pda->pd", gD, t["T"])
        + gDn[:, None] * t["P"]
        + params.pen1 * np.einsum("pa,pda->pd", gD, t["V"])
        + params.pen2 * gDn[:, None] * t["VN"]
    )
    rhs += np.bincount(t["dofs"].ravel(), (b.weights[:, None] * loc).ravel(), minlength=dm.n_total)
    return rhs


def build_system(
    poly: InterfacePolygon, mesh: Mesh, mu: float, clearance: float | None = None
) -> tuple[ElementClassification, CutGeometry, DofMap, SystemParts]:
    """Classification, cut geometry, dof map and assembled parts for one interface."""
    from .mesh import classify_elements
    from .quadrature import build_cut_geometry

    cls = classify_elements(mesh, poly, clearance)
    geom = build_cut_geometry(cls)
    dm = DofMap(cls)
    parts = assemble_system(geom, dm, mu)
    return cls, geom, dm, parts

