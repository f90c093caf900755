"""Q2 velocity / discontinuous P1 pressure spaces on the two extended subdomains."""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from typing import Callable

import numpy as np

from .errors import EvaluationError
from .mesh import ElementClassification, Mesh


def _lagrange1d(t: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Quadratic Lagrange basis on {0, 1/2, 1}: values, first and second derivatives."""
    t = np.asarray(t, dtype=float)[..., None]
    v = np.concatenate([2 * t * t - 3 * t + 1, 4 * t - 4 * t * t, 2 * t * t - t], axis=-1)
    d = np.concatenate([4 * t - 3, 4 - 8 * t, 4 * t - 1], axis=-1)
    dd = np.broadcast_to(np.array([4.0, -8.0, 4.0]), v.shape)
    return v, d, dd


_LA = np.tile(np.arange(3), 3)
_LB = np.repeat(np.arange(3), 3)


def q2_shape(ref: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Values ``(P, 9)`` and reference gradients ``(P, 9, 2)`` at points of [0,1]^2."""
    ref = np.atleast_2d(ref)
    vx, dx, _ = _lagrange1d(ref[:, 0])
    vy, dy, _ = _lagrange1d(ref[:, 1])
    val = vx[:, _LA] * vy[:, _LB]
    grad = np.stack([dx[:, _LA] * vy[:, _LB], vx[:, _LA] * dy[:, _LB]], axis=-1)
    return val, grad


@dataclass(frozen=True)
class Q2Tab:
    """Tabulated Q2 basis in physical scaling (element size ``h``)."""

    val: np.ndarray
    dx: np.ndarray
    dy: np.ndarray
    dxx: np.ndarray
    dxy: np.ndarray
    dyy: np.ndarray


def q2_tabulate(ref: np.ndarray, h: float) -> Q2Tab:
    ref = np.atleast_2d(ref)
    vx, dx, ddx = _lagrange1d(ref[:, 0])
    vy, dy, ddy = _lagrange1d(ref[:, 1])
    a, b = _LA, _LB
    return Q2Tab(
        val=vx[:, a] * vy[:, b],
        dx=dx[:, a] * vy[:, b] / h,
        dy=vx[:, a] * dy[:, b] / h,
        dxx=ddx[:, a] * vy[:, b] / h**2,
        dxy=dx[:, a] * dy[:, b] / h**2,
        dyy=vx[:, a] * ddy[:, b] / h**2,
    )


def p1_shape(center: np.ndarray, h: float, pts: np.ndarray) -> np.ndarray:
    """Centered, scaled monomials ``{1, (x-xc)/h, (y-yc)/h}``, shape ``(P, 3)``."""
    pts = np.atleast_2d(pts)
    center = np.atleast_2d(center)
    r = (pts - center) / h
    return np.column_stack([np.ones(len(pts)), r[:, 0], r[:, 1]])


class DofMap:
    """Global numbering ``[u1 | u2 | p1 | p2 | mean multiplier]``.

    Velocity dofs are interleaved per node (``2 * node + component``) within
    each side block; every active element carries three pressure dofs per side.
    """

    def __init__(self, cls: ElementClassification):
        self.cls = cls
        mesh = cls.mesh
        self.mesh = mesh
        ne = mesh.n_elements
        n_nodes = mesh.node_coords.shape[0]
        self.node_maps = []
        self.nodes = []
        self.active = []
        n_u = []
        for side in (1, 2):
            act = cls.active(side)
            nodes = np.unique(mesh.elem_nodes[act])
            nmap = np.full(n_nodes, -1, dtype=int)
            nmap[nodes] = np.arange(len(nodes))
            self.node_maps.append(nmap)
            self.nodes.append(nodes)
            self.active.append(act)
            n_u.append(2 * len(nodes))
        n_p = [3 * int(a.sum()) for a in self.active]
        self.n_u = tuple(n_u)
        self.n_p = tuple(n_p)
        self.u_offset = (0, n_u[0])
        self.p_offset = (n_u[0] + n_u[1], n_u[0] + n_u[1] + n_p[0])
        self.mean_dof = n_u[0] + n_u[1] + n_p[0] + n_p[1]
        self.n_total = self.mean_dof + 1

        self._vel = []
        self._pres = []
        for k in range(2):
            v = np.full((ne, 18), -1, dtype=int)
            act = self.active[k]
            loc = self.node_maps[k][mesh.elem_nodes[act]]
            v[act, :9] = self.u_offset[k] + 2 * loc
            v[act, 9:] = self.u_offset[k] + 2 * loc + 1
            self._vel.append(v)
            p = np.full((ne, 3), -1, dtype=int)
            rank = np.cumsum(act) - 1
            p[act] = self.p_offset[k] + 3 * rank[act][:, None] + np.arange(3)[None, :]
            self._pres.append(p)

    def vel_dofs(self, side: int) -> np.ndarray:
        """``(n^2, 18)`` velocity dofs ``[ux_0..ux_8, uy_0..uy_8]``; -1 off the side."""
        return self._vel[side - 1]

    def pres_dofs(self, side: int) -> np.ndarray:
        return self._pres[side - 1]

    def local_dofs(self, side: int) -> np.ndarray:
        return np.hstack([self._vel[side - 1], self._pres[side - 1]])

    def u_slice(self, side: int) -> slice:
        o = self.u_offset[side - 1]
        return slice(o, o + self.n_u[side - 1])

    def p_slice(self, side: int) -> slice:
        o = self.p_offset[side - 1]
        return slice(o, o + self.n_p[side - 1])

    @property
    def n_velocity(self) -> int:
        return self.n_u[0] + self.n_u[1]

    @cached_property
    def block_names(self) -> np.ndarray:
        names = np.empty(self.n_total, dtype=object)
        names[self.u_slice(1)] = "u1"
        names[self.u_slice(2)] = "u2"
        names[self.p_slice(1)] = "p1"
        names[self.p_slice(2)] = "p2"
        names[self.mean_dof] = "mean"
        return names

    def node_coords(self, side: int) -> np.ndarray:
        return self.mesh.node_coords[self.nodes[side - 1]]


def ref_coords(mesh: Mesh, pts: np.ndarray, elems: np.ndarray) -> np.ndarray:
    return (np.atleast_2d(pts) - mesh.origins[elems]) / mesh.h


def _check_support(dofs: np.ndarray, elems: np.ndarray, what: str) -> None:
    bad = dofs[elems, 0] < 0
    if np.any(bad):
        raise EvaluationError(
            f"{what}: {int(bad.sum())} point(s) lie in elements outside the extended subdomain "
            f"(first element {int(elems[bad][0])})"
        )


@dataclass(frozen=True, eq=False)
class FieldView:
    """Read-only view of the side-``side`` fields inside a full solution vector."""

    coeffs: np.ndarray
    dofmap: DofMap
    side: int

    def velocity(self, pts: np.ndarray, elems: np.ndarray | None = None, grad: bool = False):
        return eval_velocity(self.dofmap, self.coeffs, self.side, pts, elems, grad)

    def pressure(self, pts: np.ndarray, elems: np.ndarray | None = None, grad: bool = False):
        return eval_pressure(self.dofmap, self.coeffs, self.side, pts, elems, grad)


def eval_velocity(dm: DofMap, coeffs, side, pts, elems=None, grad=False):
    """Velocity ``(P, 2)`` (and gradient ``(P, 2, 2)``, ``[component, d/dx_j]``)."""
    mesh = dm.mesh
    pts = np.atleast_2d(np.asarray(pts, dtype=float))
    if elems is None:
        elems = mesh.element_of_point(pts)
    elems = np.asarray(elems, dtype=int)
    dofs = dm.vel_dofs(side)
    _check_support(dofs, elems, f"side-{side} velocity")
    c = np.asarray(coeffs)[dofs[elems]]
    tab = q2_tabulate(ref_coords(mesh, pts, elems), mesh.h)
    val = np.stack(
        [np.einsum("pk,pk->p", tab.val, c[:, :9]), np.einsum("pk,pk->p", tab.val, c[:, 9:])],
        axis=-1,
    )
    if not grad:
        return val
    g = np.empty((len(pts), 2, 2))
    for comp, sl in ((0, slice(0, 9)), (1, slice(9, 18))):
        g[:, comp, 0] = np.einsum("pk,pk->p", tab.dx, c[:, sl])
        g[:, comp, 1] = np.einsum("pk,pk->p", tab.dy, c[:, sl])
    return val, g


def eval_pressure(dm: DofMap, coeffs, side, pts, elems=None, grad=False):
    mesh = dm.mesh
    pts = np.atleast_2d(np.asarray(pts, dtype=float))
    if elems is None:
        elems = mesh.element_of_point(pts)
    elems = np.asarray(elems, dtype=int)
    dofs = dm.pres_dofs(side)
    _check_support(dofs, elems, f"side-{side} pressure")
    c = np.asarray(coeffs)[dofs[elems]]
    psi = p1_shape(mesh.centers[elems], mesh.h, pts)
    val = np.einsum("pk,pk->p", psi, c)
    if not grad:
        return val
    return val, c[:, 1:] / mesh.h


def strain(grad: np.ndarray) -> np.ndarray:
    return 0.5 * (grad + np.swapaxes(grad, -1, -2))


def eval_jump_avg(view1: FieldView, view2: FieldView, pts, elems1, elems2=None, normals=None, mu=1.0):
    """Jumps ``side1 - side2`` and averages on interface points.

    Returns a dict with ``u_jump``, ``u_avg`` and, when ``normals`` is given,
    ``traction_jump`` / ``traction_avg`` of ``(mu eps(u) - p I) n``.
    """
    elems2 = elems1 if elems2 is None else elems2
    cls = view1.dofmap.cls
    cut_or_pair = cls.cut[elems1] | (np.asarray(elems1) != np.asarray(elems2))
    if not np.all(cut_or_pair):
        raise EvaluationError("interface evaluation requested outside the cut elements")
    u1, g1 = view1.velocity(pts, elems1, grad=True)
    u2, g2 = view2.velocity(pts, elems2, grad=True)
    out = {"u_jump": u1 - u2, "u_avg": 0.5 * (u1 + u2)}
    if normals is not None:
        t1 = traction(view1, pts, elems1, normals, mu, u_grad=g1)
        t2 = traction(view2, pts, elems2, normals, mu, u_grad=g2)
        out["traction_jump"] = t1 - t2
        out["traction_avg"] = 0.5 * (t1 + t2)
    return out


def traction(view: FieldView, pts, elems, normals, mu, u_grad=None) -> np.ndarray:
    """``(mu eps(u) - p I) n`` at the given points."""
    if u_grad is None:
        _, u_grad = view.velocity(pts, elems, grad=True)
    p = view.pressure(pts, elems)
    eps = strain(u_grad)
    normals = np.atleast_2d(normals)
    return mu * np.einsum("pij,pj->pi", eps, normals) - p[:, None] * normals


# --------------------------------------------------------------------------
# interpolation
# --------------------------------------------------------------------------
VectorField = Callable[[np.ndarray, np.ndarray], np.ndarray]
ScalarField = Callable[[np.ndarray, np.ndarray], np.ndarray]


def interpolate_velocity(dm: DofMap, side: int, u: VectorField, out: np.ndarray | None = None) -> np.ndarray:
    """Nodal Q2 interpolant of ``u(x, y) -> (P, 2)`` written into ``out``."""
    out = np.zeros(dm.n_total) if out is None else out
    xy = dm.node_coords(side)
    vals = np.asarray(u(xy[:, 0], xy[:, 1]), dtype=float).reshape(len(xy), 2)
    sl = dm.u_slice(side)
    block = out[sl]
    block[0::2] = vals[:, 0]
    block[1::2] = vals[:, 1]
    out[sl] = block
    return out


def project_pressure(dm: DofMap, side: int, p: ScalarField, out: np.ndarray | None = None) -> np.ndarray:
    """Element-wise L2 projection of ``p(x, y)`` onto the P1 basis (full squares)."""
    from .quadrature import square_rule

    out = np.zeros(dm.n_total) if out is None else out
    mesh = dm.mesh
    h = mesh.h
    ref, w = square_rule()
    elems = np.flatnonzero(dm.active[side - 1])
    pts = mesh.origins[elems][:, None, :] + h * ref[None, :, :]
    vals = p(pts[..., 0].ravel(), pts[..., 1].ravel()).reshape(len(elems), -1)
    r = ref - 0.5
    psi = np.column_stack([np.ones(len(ref)), r[:, 0], r[:, 1]])
    # mass matrix of the centered monomials on the unit square is diag(1, 1/12, 1/12)
    coef = (vals * w[None, :]) @ psi / np.array([1.0, 1 / 12, 1 / 12])
    out[dm.pres_dofs(side)[elems]] = coef
    return out
