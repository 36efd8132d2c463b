"""Feasible (oscillatory) region in the ``(g_syn, I_app)`` plane.

The built-in boundary is the lookup table of limit-point continuations:
the upper branch from small to large ``g_syn`` followed by the lower branch
back to ``g_syn = 0``. Membership is answered by scanning a triangulation,
which generalises to simplices in higher dimensions.
"""

import math
from dataclasses import dataclass

import numpy as np

from .exceptions import DegeneratePolygon

_UPPER = [
    (0.007, 238.382), (0.832, 238.097), (1.657, 237.885), (2.482, 236.004),
    (3.306, 231.454), (4.131, 223.402), (4.956, 211.055), (5.781, 193.919),
    (6.606, 172.617), (7.430, 148.735), (8.255, 123.144), (9.080, 95.840),
]
_LOWER = [
    (9.019, 95.842), (8.199, 95.867), (7.380, 95.889), (6.561, 95.909),
    (5.742, 95.925), (4.923, 95.938), (4.103, 95.945), (3.284, 95.946),
    (2.465, 95.939), (1.646, 95.918), (0.826, 95.871), (0.000, 95.724),
]

# relative tolerance for on-edge decisions; boundary points count as inside
_EDGE_TOL = 1e-12


def shoelace_area(points):
    p = np.asarray(points, dtype=float)
    x, y = p[:, 0], p[:, 1]
    return 0.5 * float(np.dot(x, np.roll(y, -1)) - np.dot(np.roll(x, -1), y))


def _cross(o, a, b):
    return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])


def _segments_intersect(p1, p2, q1, q2):
    d1 = _cross(q1, q2, p1)
    d2 = _cross(q1, q2, p2)
    d3 = _cross(p1, p2, q1)
    d4 = _cross(p1, p2, q2)
    if ((d1 > 0) != (d2 > 0)) and ((d3 > 0) != (d4 > 0)) and d1 and d2 and d3 and d4:
        return True

    def on_seg(a, b, c):
        return (min(a[0], b[0]) <= c[0] <= max(a[0], b[0])
                and min(a[1], b[1]) <= c[1] <= max(a[1], b[1]))

    return ((d1 == 0 and on_seg(q1, q2, p1)) or (d2 == 0 and on_seg(q1, q2, p2))
            or (d3 == 0 and on_seg(p1, p2, q1)) or (d4 == 0 and on_seg(p1, p2, q2)))


def is_simple(points):
    """True if no two non-adjacent edges of the closed polygon touch."""
    p = [tuple(map(float, q)) for q in np.asarray(points, dtype=float)]
    n = len(p)
    if len(set(p)) != n:
        return False
    for i in range(n):
        a1, a2 = p[i], p[(i + 1) % n]
        for j in range(i + 1, n):
            if j == i or (j + 1) % n == i or (i + 1) % n == j:
                continue
            if _segments_intersect(a1, a2, p[j], p[(j + 1) % n]):
                return False
    return True


def _in_triangle(pt, a, b, c, tol):
    # assumes a, b, c counter-clockwise
    return (_cross(a, b, pt) >= -tol and _cross(b, c, pt) >= -tol
            and _cross(c, a, pt) >= -tol)


def triangulate(points):
    """Ear-clipping triangulation of a simple polygon.

    Returns an ``(n - 2, 3)`` array of vertex indices into `points`, each
    triangle counter-clockwise. Every triangle lies inside the polygon.
    """
    p = np.asarray(points, dtype=float)
    if p.ndim != 2 or p.shape[1] != 2 or p.shape[0] < 3:
        raise DegeneratePolygon("need at least three 2-D vertices")
    area = shoelace_area(p)
    scale = float(np.ptp(p[:, 0]) * np.ptp(p[:, 1])) or 1.0
    if abs(area) <= 1e-14 * scale:
        raise DegeneratePolygon("polygon has zero area")
    if not is_simple(p):
        raise DegeneratePolygon("polygon is self-intersecting or repeats a vertex")
    idx = list(range(len(p)))
    if area < 0:
        idx.reverse()
    tol = _EDGE_TOL * scale
    tris = []
    while len(idx) > 3:
        m = len(idx)
        for k in range(m):
            i0, i1, i2 = idx[k - 1], idx[k], idx[(k + 1) % m]
            a, b, c = p[i0], p[i1], p[i2]
            if _cross(a, b, c) <= tol:
                continue  # reflex or flat corner
            if any(_in_triangle(p[j], a, b, c, tol) for j in idx if j not in (i0, i1, i2)):
                continue
            tris.append((i0, i1, i2))
            del idx[k]
            break
        else:
            raise DegeneratePolygon("no ear found; polygon is degenerate")
    a, b, c = (p[i] for i in idx)
    if _cross(a, b, c) <= 0:
        raise DegeneratePolygon("final triangle is degenerate")
    tris.append(tuple(idx))
    return np.array(tris, dtype=np.int64)


@dataclass(frozen=True)
class FeasibleRegion:
    """Closed polygon in ``(g_syn, I_app)`` with a fixed triangulation."""

    boundary: np.ndarray
    triangles: np.ndarray
    area: float

    @classmethod
    def from_boundary(cls, points):
        b = np.asarray(points, dtype=float)
        tris = triangulate(b)
        return cls(b, tris, abs(shoelace_area(b)))

    @property
    def n_vertices(self):
        return self.boundary.shape[0]

    def triangle_areas(self):
        v = self.boundary[self.triangles]
        return 0.5 * np.abs(_cross_arr(v[:, 0], v[:, 1], v[:, 2]))

    def contains(self, g_syn, I_app):
        return contains(self, g_syn, I_app)

    def contains_many(self, points):
        """Vectorised membership for an ``(N, 2)`` array of (g_syn, I_app)."""
        q = np.asarray(points, dtype=float).reshape(-1, 2)
        v = self.boundary[self.triangles]
        tol = _EDGE_TOL * _scale(self.boundary)
        inside = np.zeros(q.shape[0], dtype=bool)
        for a, b, c in v:
            inside |= ((_cross_arr(a, b, q) >= -tol) & (_cross_arr(b, c, q) >= -tol)
                       & (_cross_arr(c, a, q) >= -tol))
        return inside

    def log_prior(self, g_syn, I_app):
        return log_prior(self, g_syn, I_app)


def _scale(boundary):
    return float(np.ptp(boundary[:, 0]) * np.ptp(boundary[:, 1])) or 1.0


def _cross_arr(o, a, b):
    o = np.asarray(o)
    a = np.asarray(a)
    b = np.asarray(b)
    return ((a[..., 0] - o[..., 0]) * (b[..., 1] - o[..., 1])
            - (a[..., 1] - o[..., 1]) * (b[..., 0] - o[..., 0]))


def builtin_region():
    """The 24-vertex lookup polygon."""
    return FeasibleRegion.from_boundary(_UPPER + _LOWER)


def contains(region, g_syn, I_app):
    """True iff the point lies in (or on the edge of) some triangle."""
    pt = (float(g_syn), float(I_app))
    if not (math.isfinite(pt[0]) and math.isfinite(pt[1])):
        return False
    tol = _EDGE_TOL * _scale(region.boundary)
    b = region.boundary
    for i, j, k in region.triangles:
        if _in_triangle(pt, b[i], b[j], b[k], tol):
            return True
    return False


def log_prior(region, g_syn, I_app):
    """Flat log-density ``-log(area)`` inside the region, ``-inf`` outside."""
    if region.area <= 0:
        raise ValueError("region has no area")
    return -math.log(region.area) if contains(region, g_syn, I_app) else -math.inf
