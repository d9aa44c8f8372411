"""Cubic Hermite member centerlines and small planar geometry helpers.

Units: mm. A member centerline interpolates its two endpoint vertices; the
end tangents have chord-length magnitude and are tilted from the chord by the
two end-slope angles (positive slope tilts the start tangent counterclockwise
and the end tangent clockwise, so equal slopes give a symmetric bump).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class MemberCurve:
    """Centerline of one member: endpoints, end slopes (rad), in-plane width (mm)."""

    p0: tuple[float, float]
    p1: tuple[float, float]
    slope0: float = 0.0
    slope1: float = 0.0
    width: float = 1.0

    def chord(self) -> np.ndarray:
        return np.asarray(self.p1, float) - np.asarray(self.p0, float)

    def chord_length(self) -> float:
        return float(np.linalg.norm(self.chord()))

    def tangents(self) -> tuple[np.ndarray, np.ndarray]:
        """End tangent vectors (chord-length magnitude, tilted by the end slopes)."""
        c = self.chord()
        m0 = _rotate(c, self.slope0)
        m1 = _rotate(c, -self.slope1)
        return m0, m1

    def evaluate(self, t) -> tuple[np.ndarray, np.ndarray]:
        """Position and (non-unit) tangent of the centerline at parameter t in [0, 1].

        Accepts a scalar or an array of parameters; returns arrays shaped
        (..., 2).
        """
        t = np.asarray(t, float)
        if np.any(t < -1e-12) or np.any(t > 1 + 1e-12):
            raise ValueError("curve parameter outside [0, 1]")
        p0 = np.asarray(self.p0, float)
        p1 = np.asarray(self.p1, float)
        m0, m1 = self.tangents()
        tt = t[..., None]
        h00 = 2 * tt**3 - 3 * tt**2 + 1
        h10 = tt**3 - 2 * tt**2 + tt
        h01 = -2 * tt**3 + 3 * tt**2
        h11 = tt**3 - tt**2
        pos = h00 * p0 + h10 * m0 + h01 * p1 + h11 * m1
        d00 = 6 * tt**2 - 6 * tt
        d10 = 3 * tt**2 - 4 * tt + 1
        d01 = -6 * tt**2 + 6 * tt
        d11 = 3 * tt**2 - 2 * tt
        tan = d00 * p0 + d10 * m0 + d01 * p1 + d11 * m1
        return pos, tan

    def polyline(self, n: int = 64) -> np.ndarray:
        """Sampled centerline with n segments, shape (n + 1, 2)."""
        pos, _ = self.evaluate(np.linspace(0.0, 1.0, n + 1))
        return pos

    def outline(self, n: int = 64) -> np.ndarray:
        """Closed outline polygon of the constant-width strip (no end caps)."""
        pos, tan = self.evaluate(np.linspace(0.0, 1.0, n + 1))
        nrm = unit_normals(tan)
        h = 0.5 * self.width
        left = pos + h * nrm
        right = pos - h * nrm
        return np.vstack([right, left[::-1]])


def _rotate(v: np.ndarray, angle: float) -> np.ndarray:
    c, s = np.cos(angle), np.sin(angle)
    return np.array([c * v[0] - s * v[1], s * v[0] + c * v[1]])


def unit_normals(tangents: np.ndarray) -> np.ndarray:
    """Left-hand unit normals of tangent vectors, shape preserved."""
    t = np.asarray(tangents, float)
    norm = np.linalg.norm(t, axis=-1, keepdims=True)
    norm = np.where(norm < 1e-300, 1.0, norm)
    u = t / norm
    return np.stack([-u[..., 1], u[..., 0]], axis=-1)


def segments_intersect(a0, a1, b0, b1, eps: float = 1e-12):
    """Intersection point of segments a0-a1 and b0-b1, or None.

    Touching at a shared endpoint counts as an intersection; parallel overlap
    reports the midpoint of the overlap of a.
    """
    a0 = np.asarray(a0, float)
    a1 = np.asarray(a1, float)
    b0 = np.asarray(b0, float)
    b1 = np.asarray(b1, float)
    da = a1 - a0
    db = b1 - b0
    denom = da[0] * db[1] - da[1] * db[0]
    diff = b0 - a0
    if abs(denom) < eps * max(1.0, np.abs(da).max() * np.abs(db).max()):
        cross = diff[0] * da[1] - diff[1] * da[0]
        if abs(cross) > eps * max(1.0, np.abs(da).max()):
            return None
        la2 = da @ da
        if la2 < eps:
            return None
        s0 = (diff @ da) / la2
        s1 = ((b1 - a0) @ da) / la2
        lo, hi = max(0.0, min(s0, s1)), min(1.0, max(s0, s1))
        if lo > hi:
            return None
        return a0 + 0.5 * (lo + hi) * da
    s = (diff[0] * db[1] - diff[1] * db[0]) / denom
    u = (diff[0] * da[1] - diff[1] * da[0]) / denom
    if -eps <= s <= 1 + eps and -eps <= u <= 1 + eps:
        return a0 + s * da
    return None


def polyline_intersections(pa: np.ndarray, pb: np.ndarray) -> list[np.ndarray]:
    """All crossing points between two sampled polylines (vectorized broad phase)."""
    pa = np.asarray(pa, float)
    pb = np.asarray(pb, float)
    a0, a1 = pa[:-1], pa[1:]
    b0, b1 = pb[:-1], pb[1:]
    # bounding-box prefilter on all segment pairs
    amin = np.minimum(a0, a1)[:, None, :]
    amax = np.maximum(a0, a1)[:, None, :]
    bmin = np.minimum(b0, b1)[None, :, :]
    bmax = np.maximum(b0, b1)[None, :, :]
    overlap = np.all((amin <= bmax) & (bmin <= amax), axis=-1)
    hits = []
    for i, j in zip(*np.nonzero(overlap)):
        p = segments_intersect(a0[i], a1[i], b0[j], b1[j])
        if p is not None:
            hits.append(p)
    return hits


def polygon_area(poly: np.ndarray) -> float:
    """Signed shoelace area (positive for counterclockwise polygons)."""
    p = np.asarray(poly, float)
    x, y = p[:, 0], p[:, 1]
    return 0.5 * float(np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1)))


def points_in_polygon(points: np.ndarray, poly: np.ndarray) -> np.ndarray:
    """Even-odd point-in-polygon test, vectorized over points."""
    pts = np.atleast_2d(np.asarray(points, float))
    px, py = pts[:, 0], pts[:, 1]
    vx, vy = np.asarray(poly, float).T
    wx, wy = np.roll(vx, -1), np.roll(vy, -1)
    inside = np.zeros(len(pts), dtype=bool)
    for i in range(len(vx)):
        cond = (vy[i] > py) != (wy[i] > py)
        denom = wy[i] - vy[i]
        if abs(denom) < 1e-300:
            continue
        xs = vx[i] + (py - vy[i]) * (wx[i] - vx[i]) / denom
        inside ^= cond & (px < xs)
    return inside


def polygons_overlap(pa: np.ndarray, pb: np.ndarray) -> bool:
    """True if two simple polygons share interior area (edge crossing or containment)."""
    pa = np.asarray(pa, float)
    pb = np.asarray(pb, float)
    lo_a, hi_a = pa.min(axis=0), pa.max(axis=0)
    lo_b, hi_b = pb.min(axis=0), pb.max(axis=0)
    if np.any(hi_a < lo_b) or np.any(hi_b < lo_a):
        return False
    if polyline_intersections(np.vstack([pa, pa[:1]]), np.vstack([pb, pb[:1]])):
        return True
    if points_in_polygon(pa[:1], pb)[0]:
        return True
    if points_in_polygon(pb[:1], pa)[0]:
        return True
    return False
