"""Structured background mesh and element/face classification against an interface."""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass
from functools import cached_property

import numpy as np
import shapely

from .errors import ConfigError, GeometryError
from .interface import EPS_GEO, InterfacePolygon, validate_polygon

INTERIOR1 = 0
INTERIOR2 = 1
CUT = 2
LABEL_NAMES = {INTERIOR1: "Interior1", INTERIOR2: "Interior2", CUT: "Cut"}


@dataclass(frozen=True, eq=False)
class Mesh:
    """Uniform ``n x n`` partition of the unit square.

    Element ``e = iy * n + ix`` occupies ``[ix h, (ix+1) h] x [iy h, (iy+1) h]``.
    Q2 nodes live on the ``(2n+1) x (2n+1)`` half-step lattice; local node
    ``k = 3 * lb + la`` of an element sits at lattice offset ``(la, lb)``.
    """

    n: int

    @property
    def h(self) -> float:
        return 1.0 / self.n

    @property
    def n_elements(self) -> int:
        return self.n * self.n

    @cached_property
    def element_ij(self) -> np.ndarray:
        e = np.arange(self.n_elements)
        return np.column_stack([e % self.n, e // self.n])

    @cached_property
    def origins(self) -> np.ndarray:
        """Lower-left corner of every element."""
        return self.element_ij * self.h

    @cached_property
    def centers(self) -> np.ndarray:
        return self.origins + 0.5 * self.h

    @cached_property
    def node_coords(self) -> np.ndarray:
        k = np.arange(2 * self.n + 1) * (0.5 * self.h)
        X, Y = np.meshgrid(k, k)
        return np.column_stack([X.ravel(), Y.ravel()])

    @cached_property
    def elem_nodes(self) -> np.ndarray:
        """Global Q2 node index of each element's 9 local nodes, shape ``(n^2, 9)``."""
        stride = 2 * self.n + 1
        ix, iy = self.element_ij.T
        la = np.tile(np.arange(3), 3)
        lb = np.repeat(np.arange(3), 3)
        return (2 * iy[:, None] + lb[None, :]) * stride + (2 * ix[:, None] + la[None, :])

    @cached_property
    def inner_faces(self) -> np.ndarray:
        """Interior faces as ``(K, K')`` pairs, ``K'`` to the right of or above ``K``."""
        n = self.n
        ix, iy = np.meshgrid(np.arange(n - 1), np.arange(n))
        vert = np.column_stack([(iy * n + ix).ravel(), (iy * n + ix + 1).ravel()])
        ix, iy = np.meshgrid(np.arange(n), np.arange(n - 1))
        horiz = np.column_stack([(iy * n + ix).ravel(), ((iy + 1) * n + ix).ravel()])
        return np.vstack([vert, horiz])

    @cached_property
    def inner_face_axis(self) -> np.ndarray:
        """0 for vertical faces (normal +x), 1 for horizontal faces (normal +y)."""
        nv = self.n * (self.n - 1)
        return np.concatenate([np.zeros(nv, dtype=int), np.ones(nv, dtype=int)])

    @cached_property
    def boundary_faces(self) -> tuple[np.ndarray, np.ndarray]:
        """``(elements, outward normals)`` of the 4n boundary edges."""
        n = self.n
        r = np.arange(n)
        elems = np.concatenate([r, (n - 1) * n + r, r * n, r * n + n - 1])
        normals = np.repeat(
            np.array([[0.0, -1.0], [0.0, 1.0], [-1.0, 0.0], [1.0, 0.0]]), n, axis=0
        )
        return elems, normals

    def element_of_point(self, pts: np.ndarray) -> np.ndarray:
        """Element containing each point; ties on shared edges go to the lower index."""
        pts = np.atleast_2d(pts)
        ij = np.floor(pts / self.h - 1e-9).astype(int)
        ij = np.clip(ij, 0, self.n - 1)
        return ij[:, 1] * self.n + ij[:, 0]

    def elements_containing(self, pt: np.ndarray, tol: float = 1e-9) -> list[int]:
        """All elements whose closure contains ``pt`` (sorted by index)."""
        x, y = pt / self.h
        xs = {int(math.floor(x))}
        ys = {int(math.floor(y))}
        if abs(x - round(x)) < tol:
            xs |= {int(round(x)) - 1, int(round(x))}
        if abs(y - round(y)) < tol:
            ys |= {int(round(y)) - 1, int(round(y))}
        out = [
            iy * self.n + ix
            for iy in ys
            for ix in xs
            if 0 <= ix < self.n and 0 <= iy < self.n
            and ix - tol <= x <= ix + 1 + tol and iy - tol <= y <= iy + 1 + tol
        ]
        return sorted(out)


def build_mesh(n_cells_per_side: int) -> Mesh:
    n = int(n_cells_per_side)
    if n != n_cells_per_side or n < 2:
        raise ConfigError(f"need an integer number of cells >= 2, got {n_cells_per_side!r}")
    return Mesh(n)


@dataclass(frozen=True, eq=False)
class InterfacePieces:
    """Sub-segments of the polygon, one per (segment, element) crossing.

    ``elem1``/``elem2`` are the elements used to evaluate the side-1 and
    side-2 fields on the piece; they coincide except for pieces lying on a
    mesh line between two uncut elements.
    """

    seg: np.ndarray
    t0: np.ndarray
    t1: np.ndarray
    a: np.ndarray
    b: np.ndarray
    elem1: np.ndarray
    elem2: np.ndarray

    def __len__(self) -> int:
        return len(self.seg)

    @property
    def lengths(self) -> np.ndarray:
        return np.hypot(*(self.b - self.a).T)


@dataclass(frozen=True, eq=False)
class ElementClassification:
    mesh: Mesh
    polygon: InterfacePolygon
    labels: np.ndarray
    pieces: InterfacePieces

    @property
    def cut(self) -> np.ndarray:
        return self.labels == CUT

    def interior(self, side: int) -> np.ndarray:
        return self.labels == (INTERIOR1 if side == 1 else INTERIOR2)

    def active(self, side: int) -> np.ndarray:
        """Mask of the element set touching side ``side`` (interior or cut)."""
        return self.interior(side) | self.cut

    @cached_property
    def _ghost(self) -> tuple[np.ndarray, np.ndarray]:
        f = self.mesh.inner_faces
        cut = self.cut
        out = []
        for side in (1, 2):
            act = self.active(side)
            k, kp = f[:, 0], f[:, 1]
            mask = (cut[k] & act[kp]) | (cut[kp] & act[k])
            out.append(np.flatnonzero(mask))
        return out[0], out[1]

    def ghost_faces(self, side: int) -> np.ndarray:
        """Indices into ``mesh.inner_faces`` of the ghost-penalty faces of ``side``."""
        return self._ghost[side - 1]

    def counts(self) -> dict[str, int]:
        return {name: int(np.sum(self.labels == lab)) for lab, name in LABEL_NAMES.items()}


def _trace_segment(p: np.ndarray, q: np.ndarray, h: float, n: int):
    """Split segment ``p -> q`` at grid lines; yield ``(t0, t1, a, b, ij, graze)``.

    ``graze`` is ``None`` or the pair of element (ix, iy) tuples on either side
    of a grid line the piece lies on.
    """
    d = q - p
    length = math.hypot(d[0], d[1])
    ts = [0.0, 1.0]
    for ax in (0, 1):
        if abs(d[ax]) * n > EPS_GEO:
            lo, hi = sorted((p[ax], q[ax]))
            ks = np.arange(math.ceil(lo / h), math.floor(hi / h) + 1)
            t = (ks * h - p[ax]) / d[ax]
            ts.extend(t[(t > 0.0) & (t < 1.0)].tolist())
    ts = np.unique(ts)
    # snap breakpoints closer than EPS_GEO (in length) onto their predecessor / the end
    tol = EPS_GEO / max(length, EPS_GEO)
    keep = [0.0]
    for t in ts[1:-1]:
        if t - keep[-1] > tol:
            keep.append(float(t))
    if len(keep) > 1 and 1.0 - keep[-1] <= tol:
        keep[-1] = 1.0
    else:
        keep.append(1.0)
    for t0, t1 in zip(keep[:-1], keep[1:]):
        if (t1 - t0) * length <= EPS_GEO:
            continue
        a = p + t0 * d
        b = p + t1 * d
        mid = 0.5 * (a + b)
        ix = min(max(int(math.floor(mid[0] / h)), 0), n - 1)
        iy = min(max(int(math.floor(mid[1] / h)), 0), n - 1)
        graze = None
        if abs(d[0]) <= EPS_GEO * max(1.0, abs(d[1])):
            k = round(mid[0] / h)
            if abs(mid[0] - k * h) <= EPS_GEO:
                graze = ((k - 1, iy), (k, iy))
        elif abs(d[1]) <= EPS_GEO * max(1.0, abs(d[0])):
            k = round(mid[1] / h)
            if abs(mid[1] - k * h) <= EPS_GEO:
                graze = ((ix, k - 1), (ix, k))
        yield t0, t1, a, b, (ix, iy), graze


def classify_elements(
    mesh: Mesh, poly: InterfacePolygon, clearance: float | None = None
) -> ElementClassification:
    """Label elements Interior1 / Interior2 / Cut and record interface pieces.

    ``clearance`` is the minimal vertex distance to the outer boundary
    (default: one element width, which keeps every boundary element uncut).
    """
    h, n = mesh.h, mesh.n
    validate_polygon(poly, mesh.h if clearance is None else clearance)
    pts = poly.closed_points
    rows = []
    grazing = []
    for j in range(poly.m):
        for t0, t1, a, b, (ix, iy), graze in _trace_segment(pts[j], pts[j + 1], h, n):
            if graze is None:
                e = iy * n + ix
                rows.append((j, t0, t1, a, b, e, e))
            else:
                grazing.append((j, t0, t1, a, b, graze))

    labels = np.empty(mesh.n_elements, dtype=np.int8)
    inside = shapely.contains_xy(poly.shapely_polygon(), mesh.centers[:, 0], mesh.centers[:, 1])
    labels[:] = np.where(inside, INTERIOR2, INTERIOR1)
    cut_elems = np.array(sorted({r[5] for r in rows}), dtype=int)
    labels[cut_elems] = CUT

    for j, t0, t1, a, b, (ka, kb) in grazing:
        cand = [
            kk[1] * n + kk[0] for kk in (ka, kb) if 0 <= kk[0] < n and 0 <= kk[1] < n
        ]
        cut_c = [e for e in cand if labels[e] == CUT]
        if cut_c:
            e = min(cut_c)
            rows.append((j, t0, t1, a, b, e, e))
            continue
        e1 = [e for e in cand if labels[e] == INTERIOR1]
        e2 = [e for e in cand if labels[e] == INTERIOR2]
        if not e1 or not e2:
            raise GeometryError("interface runs along a mesh line with the same side on both sides")
        rows.append((j, t0, t1, a, b, e1[0], e2[0]))

    rows.sort(key=lambda r: (r[0], r[1]))
    pieces = InterfacePieces(
        seg=np.array([r[0] for r in rows], dtype=int),
        t0=np.array([r[1] for r in rows]),
        t1=np.array([r[2] for r in rows]),
        a=np.array([r[3] for r in rows]).reshape(-1, 2),
        b=np.array([r[4] for r in rows]).reshape(-1, 2),
        elem1=np.array([r[5] for r in rows], dtype=int),
        elem2=np.array([r[6] for r in rows], dtype=int),
    )
    return ElementClassification(mesh, poly, labels, pieces)


@dataclass(frozen=True)
class Assumption1Report:
    satisfied: bool
    worst_path_length: int
    failures: list[tuple[int, int]]


def check_assumption1(cls: ElementClassification, max_path: int = 10**9) -> Assumption1Report:
    """Face-path distance from every cut element to an interior element, per side.

    The path may only traverse elements of the side's active set.  Failures
    list ``(element, side)`` pairs that cannot reach an interior element
    within ``max_path`` face crossings.
    """
    mesh = cls.mesh
    nbrs: list[list[int]] = [[] for _ in range(mesh.n_elements)]
    for k, kp in mesh.inner_faces:
        nbrs[k].append(kp)
        nbrs[kp].append(k)
    worst = 0
    failures = []
    cut = np.flatnonzero(cls.cut)
    for side in (1, 2):
        act = cls.active(side)
        dist = np.full(mesh.n_elements, -1, dtype=int)
        queue = deque(np.flatnonzero(cls.interior(side)).tolist())
        for e in queue:
            dist[e] = 0
        while queue:
            e = queue.popleft()
            for f in nbrs[e]:
                if act[f] and dist[f] < 0:
                    dist[f] = dist[e] + 1
                    queue.append(f)
        for e in cut:
            if dist[e] < 0 or dist[e] > max_path:
                failures.append((int(e), side))
            else:
                worst = max(worst, int(dist[e]))
    return Assumption1Report(not failures, worst, failures)
