"""Lagrangian description of the elastic membrane.

The membrane is a closed polygon with vertices ``X_j`` attached to fixed
reference coordinates ``0 = s_0 < s_1 < ... < s_m = L``.  Everything the
fluid solver needs from it (tangents, vertex forces, enclosed area, elastic
energy) is computed here from the vertex positions alone.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence, Union

import numpy as np
import shapely

from .errors import ConfigError, GeometryError, StepFailure

EPS_GEO = 1e-12


# --------------------------------------------------------------------------
# polygon
# --------------------------------------------------------------------------
@dataclass(frozen=True, eq=False)
class InterfacePolygon:
    """Closed polygon ``X_0, ..., X_{m-1}`` (``X_m`` identified with ``X_0``).

    ``s`` has ``m + 1`` entries with ``s[0] = 0`` and ``s[m] = L``.
    """

    points: np.ndarray
    s: np.ndarray

    def __post_init__(self):
        pts = np.array(self.points, dtype=float, copy=True)
        s = np.array(self.s, dtype=float, copy=True)
        if pts.ndim != 2 or pts.shape[1] != 2:
            raise GeometryError("interface points must have shape (m, 2)")
        m = len(pts)
        if m < 3:
            raise GeometryError("interface polygon needs at least 3 vertices")
        if s.shape != (m + 1,):
            raise GeometryError(f"expected {m + 1} reference coordinates, got {s.shape}")
        if s[0] != 0.0 or np.any(np.diff(s) <= 0.0):
            raise GeometryError("reference coordinates must start at 0 and increase strictly")
        pts.setflags(write=False)
        s.setflags(write=False)
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "s", s)

    @property
    def m(self) -> int:
        return len(self.points)

    @property
    def L(self) -> float:
        return float(self.s[-1])

    @property
    def ds(self) -> np.ndarray:
        """Reference segment lengths ``s_{j+1} - s_j``."""
        return np.diff(self.s)

    @property
    def closed_points(self) -> np.ndarray:
        """Vertices with ``X_m = X_0`` appended."""
        return np.vstack([self.points, self.points[:1]])

    def segment_vectors(self) -> np.ndarray:
        return np.roll(self.points, -1, axis=0) - self.points

    def chord_lengths(self) -> np.ndarray:
        return np.hypot(*self.segment_vectors().T)

    def perimeter(self) -> float:
        return float(self.chord_lengths().sum())

    def signed_area(self) -> float:
        x, y = self.points.T
        xn, yn = np.roll(x, -1), np.roll(y, -1)
        return 0.5 * float(np.sum(x * yn - xn * y))

    @property
    def orientation(self) -> int:
        """+1 for counterclockwise vertex order, -1 for clockwise."""
        return 1 if self.signed_area() > 0 else -1

    def segment_normals(self) -> np.ndarray:
        """Unit normals per segment, pointing from the exterior into the enclosed region."""
        d = self.segment_vectors()
        length = np.hypot(*d.T)[:, None]
        left = np.column_stack([-d[:, 1], d[:, 0]]) / length
        return self.orientation * left

    def centroid(self) -> np.ndarray:
        x, y = self.points.T
        xn, yn = np.roll(x, -1), np.roll(y, -1)
        cross = x * yn - xn * y
        a = 0.5 * cross.sum()
        cx = np.sum((x + xn) * cross) / (6.0 * a)
        cy = np.sum((y + yn) * cross) / (6.0 * a)
        return np.array([cx, cy])

    def shapely_polygon(self) -> shapely.Polygon:
        return shapely.Polygon(self.points)

    def is_simple(self) -> bool:
        return bool(shapely.LinearRing(self.points).is_simple)

    def with_points(self, points: np.ndarray) -> "InterfacePolygon":
        return InterfacePolygon(points, self.s)

    def reindexed(self, shift: int) -> "InterfacePolygon":
        """Cyclic relabelling of the vertices (reference spacings move with them)."""
        pts = np.roll(self.points, -shift, axis=0)
        ds = np.roll(self.ds, -shift)
        return InterfacePolygon(pts, np.concatenate([[0.0], np.cumsum(ds)]))


def validate_polygon(poly: InterfacePolygon, clearance: float = 0.0) -> None:
    """Raise :class:`GeometryError` unless ``poly`` is simple and inside (0,1)^2.

    ``clearance`` is the minimal distance required between any vertex and the
    boundary of the unit square.
    """
    x, y = poly.points.T
    dist = np.min(np.minimum.reduce([x, 1.0 - x, y, 1.0 - y]))
    if dist <= clearance:
        raise GeometryError(
            f"interface comes within {dist:.4g} of the outer boundary (required > {clearance:.4g})"
        )
    if not poly.is_simple():
        raise GeometryError("interface polygon self-intersects")


# --------------------------------------------------------------------------
# initial curves
# --------------------------------------------------------------------------
def cubic_reparam(s: np.ndarray) -> np.ndarray:
    """Map ``s -> (16 s^3 - 24 s^2 + 13 s) / 5`` used for the stretched circle."""
    s = np.asarray(s, dtype=float)
    return (16.0 * s**3 - 24.0 * s**2 + 13.0 * s) / 5.0


@dataclass(frozen=True)
class Ellipse:
    a: float = 0.3
    b: float = 0.4
    center: tuple[float, float] = (0.5, 0.5)

    def __call__(self, u: np.ndarray) -> np.ndarray:
        th = 2.0 * np.pi * np.asarray(u, dtype=float)
        return np.column_stack(
            [self.a * np.cos(th) + self.center[0], self.b * np.sin(th) + self.center[1]]
        )


@dataclass(frozen=True)
class Circle:
    r: float = 0.25
    center: tuple[float, float] = (0.5, 0.5)
    reparam: bool = False

    def __call__(self, u: np.ndarray) -> np.ndarray:
        u = np.asarray(u, dtype=float)
        if self.reparam:
            u = cubic_reparam(u)
        th = 2.0 * np.pi * u
        return np.column_stack(
            [self.r * np.cos(th) + self.center[0], self.r * np.sin(th) + self.center[1]]
        )


@dataclass(frozen=True)
class Heart:
    """Sum of two translated cardioids.

    The printed prefactor (1/20) places the curve outside the unit square; the
    prefactor is therefore a parameter with default 1/40.
    """

    scale: float = 1.0 / 40.0

    def __call__(self, u: np.ndarray) -> np.ndarray:
        th = 2.0 * np.pi * np.asarray(u, dtype=float)
        c, s = np.cos(th), np.sin(th)
        x = c * (7.0 * (1.0 - s) + 3.0 * (1.0 - c)) + 24.0
        y = s * (3.0 * (1.0 - s) + 7.0 * (1.0 - c)) + 24.0
        return self.scale * np.column_stack([x, y])


@dataclass(frozen=True)
class PointList:
    """Explicit vertex list; ``m`` must equal the number of points."""

    points: tuple[tuple[float, float], ...] = field(default_factory=tuple)

    def __call__(self, u: np.ndarray) -> np.ndarray:
        raise ConfigError("an explicit point list cannot be resampled")


Curve = Union[Ellipse, Circle, Heart, PointList]


@dataclass(frozen=True)
class CurveSpec:
    """Initial curve plus sampling resolution.

    ``m=None`` selects the smallest ``m >= 8`` whose largest chord is below
    ``h/2`` (``h`` must then be passed to :func:`sample_initial`).
    """

    curve: Curve
    m: int | None = None
    L: float = 1.0


def _sample(curve: Curve, m: int, L: float) -> InterfacePolygon:
    s = np.linspace(0.0, L, m + 1)
    pts = curve(s[:-1] / L)
    return InterfacePolygon(pts, s)


def auto_m(curve: Curve, h: float, L: float = 1.0, m_min: int = 8) -> int:
    """Smallest ``m >= m_min`` with every initial chord shorter than ``h/2``."""
    dense = curve(np.linspace(0.0, 1.0, 20001))
    speed = np.max(np.hypot(*np.diff(dense, axis=0).T)) * 20000
    m = max(m_min, int(math.floor(speed / (0.5 * h))) - 2)
    while _sample(curve, m, L).chord_lengths().max() >= 0.5 * h:
        m += 1
    # walk back down in case the estimate overshot
    while m > m_min and _sample(curve, m - 1, L).chord_lengths().max() < 0.5 * h:
        m -= 1
    return m


def sample_initial(spec: CurveSpec, h: float | None = None) -> InterfacePolygon:
    """Sample the initial polygon ``X_j = X0(s_j)`` (or ``X0(cubic(s_j))``)."""
    curve = spec.curve
    if isinstance(curve, PointList):
        pts = np.asarray(curve.points, dtype=float)
        m = len(pts)
        poly = InterfacePolygon(pts, np.linspace(0.0, spec.L, m + 1))
    else:
        m = spec.m
        if m is None:
            if h is None:
                raise ConfigError("automatic m needs the mesh size h")
            m = auto_m(curve, h, spec.L)
        if m < 8:
            raise ConfigError(f"m must be at least 8, got {m}")
        poly = _sample(curve, m, spec.L)
    if not poly.is_simple():
        raise GeometryError("sampled initial polygon self-intersects")
    return poly


# --------------------------------------------------------------------------
# membrane mechanics
# --------------------------------------------------------------------------
def segment_tangents(poly: InterfacePolygon) -> np.ndarray:
    """Piecewise-constant ``dX/ds`` on each segment, shape ``(m, 2)``."""
    return poly.segment_vectors() / poly.ds[:, None]


def force_coefficients(poly: InterfacePolygon, kappa: float) -> np.ndarray:
    """Vertex forces ``G_j = kappa (dX_j/ds - dX_{j-1}/ds)``.

    The discrete force functional is ``<F, v> = sum_j G_j . {v(X_j)}``.
    """
    t = segment_tangents(poly)
    return kappa * (t - np.roll(t, 1, axis=0))


def membrane_energy(poly: InterfacePolygon, kappa: float) -> float:
    """Elastic energy ``kappa/2 * sum_j |dX_j/ds|^2 (s_{j+1} - s_j)``."""
    t = segment_tangents(poly)
    return 0.5 * kappa * float(np.sum(np.sum(t * t, axis=1) * poly.ds))


def enclosed_area(poly: InterfacePolygon) -> float:
    """Shoelace area; positive for counterclockwise polygons."""
    return poly.signed_area()


VelocitySource = Union[np.ndarray, Callable[[np.ndarray], np.ndarray]]


def advect(
    poly: InterfacePolygon,
    vel: VelocitySource,
    dt: float,
    *,
    clearance: float = 0.0,
    max_move: float | None = None,
) -> InterfacePolygon:
    """Move every vertex by ``dt * vel(X_j)``; reference coordinates are unchanged.

    ``vel`` is either an ``(m, 2)`` array of vertex velocities or a callable
    mapping an ``(m, 2)`` point array to velocities.
    """
    v = vel(poly.points) if callable(vel) else np.asarray(vel, dtype=float)
    if v.shape != poly.points.shape:
        raise StepFailure(f"velocity shape {v.shape} does not match vertices {poly.points.shape}")
    disp = dt * v
    if not np.all(np.isfinite(disp)):
        raise StepFailure("non-finite interface displacement")
    if max_move is not None:
        worst = float(np.max(np.hypot(*disp.T)))
        if worst > max_move:
            raise StepFailure(f"vertex displacement {worst:.4g} exceeds the limit {max_move:.4g}")
    new = poly.with_points(poly.points + disp)
    x, y = new.points.T
    dist = float(np.min(np.minimum.reduce([x, 1.0 - x, y, 1.0 - y])))
    if dist <= clearance:
        raise StepFailure(f"interface moved within {dist:.4g} of the outer boundary")
    if not new.is_simple():
        raise GeometryError("advected interface self-intersects")
    return new


# --------------------------------------------------------------------------
# snapshot i/o
# --------------------------------------------------------------------------
def write_polygon_csv(poly: InterfacePolygon, path: str | Path) -> None:
    """Write ``j, s_j, x_j, y_j`` rows for ``j = 0..m`` (the last row closes the curve)."""
    pts = poly.closed_points
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["j", "s", "x", "y"])
        for j in range(poly.m + 1):
            w.writerow([j, repr(float(poly.s[j])), repr(float(pts[j, 0])), repr(float(pts[j, 1]))])


def read_polygon_csv(path: str | Path) -> InterfacePolygon:
    rows = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    s = rows[:, 1]
    pts = rows[:-1, 2:4]
    return InterfacePolygon(pts, s)


def polygon_from_points(points: Sequence[Sequence[float]], L: float = 1.0) -> InterfacePolygon:
    pts = np.asarray(points, dtype=float)
    return InterfacePolygon(pts, np.linspace(0.0, L, len(pts) + 1))
