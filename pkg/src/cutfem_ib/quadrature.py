"""Quadrature on uncut squares, clipped sub-polygons, interface pieces and faces."""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np
import shapely

from .interface import InterfacePolygon
from .mesh import CUT, ElementClassification, Mesh

SLIVER_FRACTION = 1e-10

_G1_PTS, _G1_WTS = np.polynomial.legendre.leggauss(3)
GAUSS3_POINTS = 0.5 * (_G1_PTS + 1.0)
GAUSS3_WEIGHTS = 0.5 * _G1_WTS

_sq = np.sqrt(15.0)
_a1, _b1 = (6.0 - _sq) / 21.0, (9.0 + 2.0 * _sq) / 21.0
_a2, _b2 = (6.0 + _sq) / 21.0, (9.0 - 2.0 * _sq) / 21.0
# degree-5 seven point rule on the reference triangle, barycentric coordinates
TRI7_BARY = np.array(
    [
        [1 / 3, 1 / 3, 1 / 3],
        [_a1, _a1, _b1], [_a1, _b1, _a1], [_b1, _a1, _a1],
        [_a2, _a2, _b2], [_a2, _b2, _a2], [_b2, _a2, _a2],
    ]
)
TRI7_WEIGHTS = np.array(
    [9 / 40] + [(155.0 - _sq) / 1200.0] * 3 + [(155.0 + _sq) / 1200.0] * 3
)


def square_rule() -> tuple[np.ndarray, np.ndarray]:
    """3x3 tensor Gauss rule on the unit square (points, weights summing to 1)."""
    X, Y = np.meshgrid(GAUSS3_POINTS, GAUSS3_POINTS)
    W = np.outer(GAUSS3_WEIGHTS, GAUSS3_WEIGHTS)
    return np.column_stack([X.ravel(), Y.ravel()]), W.ravel()


def triangle_rule(tris: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Seven point rule on each triangle of ``tris`` (shape ``(k, 3, 2)``).

    Returns points ``(k, 7, 2)`` and positive weights ``(k, 7)``.
    """
    tris = np.asarray(tris, dtype=float).reshape(-1, 3, 2)
    pts = np.einsum("qv,kvd->kqd", TRI7_BARY, tris)
    e1 = tris[:, 1] - tris[:, 0]
    e2 = tris[:, 2] - tris[:, 0]
    area = 0.5 * np.abs(e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0])
    return pts, area[:, None] * TRI7_WEIGHTS[None, :]


def line_rule(a: np.ndarray, b: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """3-point Gauss rule on segments ``a -> b`` (arrays ``(k, 2)``).

    Returns points ``(k, 3, 2)``, weights ``(k, 3)`` and local parameters ``(3,)``.
    """
    a = np.atleast_2d(a)
    b = np.atleast_2d(b)
    d = b - a
    pts = a[:, None, :] + GAUSS3_POINTS[None, :, None] * d[:, None, :]
    length = np.hypot(d[:, 0], d[:, 1])
    return pts, length[:, None] * GAUSS3_WEIGHTS[None, :], GAUSS3_POINTS


def polygon_area(coords: np.ndarray) -> float:
    x, y = np.asarray(coords, dtype=float).T
    return 0.5 * float(np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y))


def triangulate(geom) -> np.ndarray:
    """Triangles ``(k, 3, 2)`` of a (multi)polygon, possibly non-convex or with holes."""
    parts = [g for g in shapely.get_parts(geom) if g.geom_type == "Polygon" and g.area > 0]
    if not parts:
        return np.zeros((0, 3, 2))
    tris = shapely.get_parts(shapely.constrained_delaunay_triangles(np.array(parts, dtype=object)))
    return shapely.get_coordinates(tris).reshape(-1, 4, 2)[:, :3]


def bulk_quadrature(region) -> tuple[np.ndarray, np.ndarray]:
    """Points and weights on a shapely (multi)polygon via triangulation."""
    pts, w = triangle_rule(triangulate(region))
    return pts.reshape(-1, 2), w.ravel()


@dataclass(frozen=True)
class ClippedElement:
    side1: list[np.ndarray]
    side2: list[np.ndarray]
    segments: list[tuple[int, float, float, np.ndarray, np.ndarray]]

    @property
    def area1(self) -> float:
        return sum(abs(polygon_area(c)) for c in self.side1)

    @property
    def area2(self) -> float:
        return sum(abs(polygon_area(c)) for c in self.side2)


def _exteriors(geom) -> list[np.ndarray]:
    out = []
    for g in shapely.get_parts(geom):
        if g.geom_type == "Polygon" and g.area > 0:
            out.append(np.asarray(g.exterior.coords)[:-1])
    return out


def clip_element(box: tuple[float, float, float, float], poly: InterfacePolygon) -> ClippedElement:
    """Split the square ``(x0, y0, x1, y1)`` by the polygon.

    Side 2 is the part enclosed by the polygon.  Each interface sub-segment is
    reported as ``(segment j, s_a, s_b, start, end)``.
    """
    x0, y0, x1, y1 = box
    sq = shapely.box(x0, y0, x1, y1)
    p = poly.shapely_polygon()
    inside = shapely.intersection(sq, p)
    outside = shapely.difference(sq, p)
    segs = []
    pts = poly.closed_points
    for j in range(poly.m):
        a, b = pts[j], pts[j + 1]
        d = b - a
        # clip against the box only (the element need not sit on the unit grid)
        t_lo, t_hi = 0.0, 1.0
        ok = True
        for ax, lo, hi in ((0, x0, x1), (1, y0, y1)):
            if abs(d[ax]) < 1e-300:
                if not (lo <= a[ax] <= hi):
                    ok = False
                continue
            ta, tb = sorted(((lo - a[ax]) / d[ax], (hi - a[ax]) / d[ax]))
            t_lo, t_hi = max(t_lo, ta), min(t_hi, tb)
        if not ok or t_hi - t_lo <= 1e-14:
            continue
        sj, sk = poly.s[j], poly.s[j + 1]
        segs.append(
            (j, sj + t_lo * (sk - sj), sj + t_hi * (sk - sj), a + t_lo * d, a + t_hi * d)
        )
    return ClippedElement(_exteriors(outside), _exteriors(inside), segs)


@dataclass(frozen=True, eq=False)
class PointSet:
    """Quadrature points tagged by element."""

    elem: np.ndarray
    points: np.ndarray
    weights: np.ndarray

    def __len__(self) -> int:
        return len(self.weights)


@dataclass(frozen=True, eq=False)
class InterfaceQuadrature:
    points: np.ndarray
    weights: np.ndarray
    normals: np.ndarray
    elem1: np.ndarray
    elem2: np.ndarray
    seg: np.ndarray
    s: np.ndarray

    def __len__(self) -> int:
        return len(self.weights)


@dataclass(frozen=True, eq=False)
class CutGeometry:
    cls: ElementClassification
    cut_bulk: tuple[PointSet, PointSet]
    interface: InterfaceQuadrature
    boundary: PointSet
    boundary_normals: np.ndarray

    @property
    def mesh(self) -> Mesh:
        return self.cls.mesh

    @property
    def polygon(self) -> InterfacePolygon:
        return self.cls.polygon

    @cached_property
    def _uncut(self) -> tuple[PointSet, PointSet]:
        ref_pts, ref_w = square_rule()
        h = self.mesh.h
        out = []
        for side in (1, 2):
            elems = np.flatnonzero(self.cls.interior(side))
            pts = self.mesh.origins[elems][:, None, :] + h * ref_pts[None, :, :]
            w = np.broadcast_to(h * h * ref_w, (len(elems), len(ref_w)))
            out.append(
                PointSet(np.repeat(elems, len(ref_w)), pts.reshape(-1, 2), w.ravel().copy())
            )
        return out[0], out[1]

    def uncut_bulk(self, side: int) -> PointSet:
        return self._uncut[side - 1]

    @cached_property
    def _all_bulk(self) -> tuple[PointSet, PointSet]:
        out = []
        for side in (1, 2):
            u, c = self._uncut[side - 1], self.cut_bulk[side - 1]
            out.append(
                PointSet(
                    np.concatenate([u.elem, c.elem]),
                    np.vstack([u.points, c.points]),
                    np.concatenate([u.weights, c.weights]),
                )
            )
        return out[0], out[1]

    def bulk(self, side: int) -> PointSet:
        """All bulk quadrature of ``side`` (uncut and clipped elements)."""
        return self._all_bulk[side - 1]

    def side_area(self, side: int) -> float:
        return float(self.bulk(side).weights.sum())

    def element_side_areas(self) -> np.ndarray:
        """``(n^2, 2)`` area of each element on side 1 and side 2."""
        out = np.zeros((self.mesh.n_elements, 2))
        for side in (1, 2):
            b = self.bulk(side)
            out[:, side - 1] = np.bincount(b.elem, b.weights, minlength=self.mesh.n_elements)
        return out

    def dump_csv(self, path) -> None:
        """Debug dump: ``kind, side, elem, x, y, w`` per quadrature point."""
        with open(path, "w") as fh:
            fh.write("kind,side,elem,x,y,w\n")
            for side in (1, 2):
                b = self.bulk(side)
                for e, (x, y), w in zip(b.elem, b.points, b.weights):
                    fh.write(f"bulk,{side},{e},{x!r},{y!r},{w!r}\n")
            q = self.interface
            for e, (x, y), w in zip(q.elem1, q.points, q.weights):
                fh.write(f"interface,0,{e},{x!r},{y!r},{w!r}\n")


def _cut_bulk(cls: ElementClassification) -> tuple[PointSet, PointSet]:
    mesh = cls.mesh
    h = mesh.h
    elems = np.flatnonzero(cls.labels == CUT)
    if len(elems) == 0:
        empty = PointSet(np.zeros(0, dtype=int), np.zeros((0, 2)), np.zeros(0))
        return empty, empty
    o = mesh.origins[elems]
    boxes = shapely.box(o[:, 0], o[:, 1], o[:, 0] + h, o[:, 1] + h)
    poly = cls.polygon.shapely_polygon()
    shapely.prepare(poly)
    regions = (shapely.difference(boxes, poly), shapely.intersection(boxes, poly))

    tri_sets = []
    for geom in regions:
        parts, idx = shapely.get_parts(geom, return_index=True)
        keep = (shapely.get_type_id(parts) == 3) & (shapely.area(parts) > 0.0)
        parts, idx = parts[keep], idx[keep]
        if len(parts) == 0:
            tri_sets.append((np.zeros(0, dtype=int), np.zeros((0, 3, 2))))
            continue
        tris = shapely.constrained_delaunay_triangles(parts)
        tparts, tidx = shapely.get_parts(tris, return_index=True)
        coords = shapely.get_coordinates(tparts).reshape(-1, 4, 2)[:, :3]
        tri_sets.append((idx[tidx], coords))

    pts_w = [triangle_rule(c) for _, c in tri_sets]
    areas = np.zeros((len(elems), 2))
    for k, ((loc, _), (_, w)) in enumerate(zip(tri_sets, pts_w)):
        areas[:, k] = np.bincount(loc, w.sum(axis=1), minlength=len(elems))

    # slivers: drop the tiny side and give its area to the other one
    scale = np.ones((len(elems), 2))
    drop = np.zeros((len(elems), 2), dtype=bool)
    tiny = areas < SLIVER_FRACTION * h * h
    for k in (0, 1):
        other = 1 - k
        sel = tiny[:, k] & (areas[:, other] > 0)
        drop[sel, k] = True
        scale[sel, other] = (h * h) / areas[sel, other]

    out = []
    for k, ((loc, _), (pts, w)) in enumerate(zip(tri_sets, pts_w)):
        keep = ~drop[loc, k]
        w = w[keep] * scale[loc[keep], k][:, None]
        pts = pts[keep]
        e = np.repeat(elems[loc[keep]], w.shape[1])
        order = np.argsort(e, kind="stable")
        out.append(PointSet(e[order], pts.reshape(-1, 2)[order], w.ravel()[order]))
    return out[0], out[1]


def _interface_quadrature(cls: ElementClassification) -> InterfaceQuadrature:
    pc = cls.pieces
    poly = cls.polygon
    pts, w, tau = line_rule(pc.a, pc.b)
    normals = poly.segment_normals()[pc.seg]
    sj = poly.s[pc.seg]
    dsj = poly.ds[pc.seg]
    t = pc.t0[:, None] + (pc.t1 - pc.t0)[:, None] * tau[None, :]
    s = sj[:, None] + t * dsj[:, None]
    nq = len(tau)
    return InterfaceQuadrature(
        points=pts.reshape(-1, 2),
        weights=w.ravel(),
        normals=np.repeat(normals, nq, axis=0),
        elem1=np.repeat(pc.elem1, nq),
        elem2=np.repeat(pc.elem2, nq),
        seg=np.repeat(pc.seg, nq),
        s=s.ravel(),
    )


def _boundary_quadrature(mesh: Mesh) -> tuple[PointSet, np.ndarray]:
    elems, normals = mesh.boundary_faces
    h = mesh.h
    o = mesh.origins[elems]
    a = o.copy()
    b = o.copy()
    # bottom, top, left, right edges of the element
    a[normals[:, 1] > 0, 1] += h
    b[normals[:, 1] > 0, 1] += h
    b[normals[:, 1] != 0, 0] += h
    a[normals[:, 0] > 0, 0] += h
    b[normals[:, 0] > 0, 0] += h
    b[normals[:, 0] != 0, 1] += h
    pts, w, _ = line_rule(a, b)
    nq = pts.shape[1]
    return (
        PointSet(np.repeat(elems, nq), pts.reshape(-1, 2), w.ravel()),
        np.repeat(normals, nq, axis=0),
    )


def build_cut_geometry(cls: ElementClassification) -> CutGeometry:
    """All quadrature sets for one interface position."""
    bnd, bnd_n = _boundary_quadrature(cls.mesh)
    return CutGeometry(
        cls=cls,
        cut_bulk=_cut_bulk(cls),
        interface=_interface_quadrature(cls),
        boundary=bnd,
        boundary_normals=bnd_n,
    )


__all__ = [
    "CutGeometry",
    "InterfaceQuadrature",
    "PointSet",
    "build_cut_geometry",
    "bulk_quadrature",
    "clip_element",
    "line_rule",
    "square_rule",
    "triangle_rule",
    "triangulate",
]
