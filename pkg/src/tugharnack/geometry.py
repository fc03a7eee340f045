"""Vectors, plane rotations, sphere sampling and planar topology.

All vector routines accept a single vector of shape ``(d,)`` or a batch of
shape ``(n, d)`` and operate along the last axis.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _backend

GEO_TOL = 1e-12


class GeometryError(ValueError):
    """Raised on degenerate geometric input."""


def unit(v):
    """Return ``v / |v|``.

    Raises
    ------
    GeometryError
        If any input vector has zero norm.
    """
    v = np.asarray(v, dtype=float)
    n = np.linalg.norm(v, axis=-1, keepdims=True)
    if np.any(n == 0.0):
        raise GeometryError("degenerate direction")
    return v / n


def perp2(v):
    """Quarter-turn counter-clockwise of planar vectors."""
    v = np.asarray(v, dtype=float)
    return np.stack([-v[..., 1], v[..., 0]], axis=-1)


def sample_orthogonal_sphere(v, radius, rng):
    """Uniform sample on the sphere of given radius inside ``v``-perp.

    For ``d = 2`` the sphere is the two points ``+-radius * perp(v_hat)``,
    each chosen with probability one half.  For ``d >= 3`` a Gaussian vector
    is projected onto ``v``-perp and normalised.

    Parameters
    ----------
    v : array_like, shape (d,) or (n, d)
        Nonzero reference directions.
    radius : float or array_like
        Sphere radius (positive).
    rng : numpy.random.Generator
    """
    v = np.asarray(v, dtype=float)
    d = v.shape[-1]
    if d < 2:
        raise GeometryError("dimension must be at least 2")
    if np.any(np.asarray(radius) <= 0):
        raise GeometryError("radius must be positive")
    vh = unit(v)
    radius = np.asarray(radius, dtype=float)
    if d == 2:
        sign = np.where(rng.random(v.shape[:-1]) < 0.5, -1.0, 1.0)
        return (sign * radius)[..., None] * perp2(vh)
    g = rng.standard_normal(v.shape)
    for _ in range(2):  # second pass mops up cancellation error
        g = g - np.sum(g * vh, axis=-1, keepdims=True) * vh
    n = np.linalg.norm(g, axis=-1, keepdims=True)
    return radius[..., None] * g / n


def sample_sphere(shape, d, rng):
    """Uniform unit vectors of dimension ``d``; output shape ``shape + (d,)``."""
    shape = (shape,) if np.isscalar(shape) else tuple(shape)
    g = rng.standard_normal(shape + (d,))
    return g / np.linalg.norm(g, axis=-1, keepdims=True)


@dataclass(frozen=True)
class PlaneRotation:
    """Rotation by ``theta`` in the plane ``span{e, f}``, taking ``e`` toward ``f``.

    Fields may carry a leading batch axis: ``e, f`` of shape ``(n, d)`` and
    ``theta`` of shape ``(n,)``.
    """

    e: np.ndarray
    f: np.ndarray
    theta: np.ndarray

    def apply(self, x):
        x = np.asarray(x, dtype=float)
        xe = np.sum(x * self.e, axis=-1, keepdims=True)
        xf = np.sum(x * self.f, axis=-1, keepdims=True)
        th = np.asarray(self.theta, dtype=float)[..., None]
        c = np.cos(th)
        s = np.sin(th)
        return x + (c - 1.0) * (xe * self.e + xf * self.f) + s * (xe * self.f - xf * self.e)

    def inverse(self):
        return PlaneRotation(self.e, self.f, -np.asarray(self.theta))

    def apply_inverse(self, x):
        return self.inverse().apply(x)

    def matrix(self):
        """Dense matrix (single rotation only)."""
        d = self.e.shape[-1]
        return self.apply(np.eye(d)).T


def _complete(e):
    # some unit vector orthogonal to each row of e
    d = e.shape[-1]
    idx = np.argmin(np.abs(e), axis=-1)
    a = np.zeros_like(e)
    np.put_along_axis(a, idx[..., None], 1.0, axis=-1)
    a = a - np.sum(a * e, axis=-1, keepdims=True) * e
    if d < 2:
        raise GeometryError("dimension must be at least 2")
    return a / np.linalg.norm(a, axis=-1, keepdims=True)


def plane_rotation_span_to_span(src, dst):
    """Minimal-angle rotation mapping the line ``span{src}`` onto ``span{dst}``.

    Lines rather than rays are matched, so ``theta`` lies in ``[0, pi/2]``;
    the rotation fixes ``span{src, dst}``-perp pointwise.  Batched inputs
    give a batched rotation.
    """
    a = unit(src)
    b = unit(dst)
    ab = np.sum(a * b, axis=-1, keepdims=True)
    b = np.where(ab < 0.0, -b, b)
    ab = np.abs(ab)
    c = b - ab * a
    cn = np.linalg.norm(c, axis=-1, keepdims=True)
    tiny = cn[..., 0] <= GEO_TOL
    safe = np.where(cn > GEO_TOL, cn, 1.0)
    f = np.where(cn > GEO_TOL, c / safe, _complete(a))
    theta = np.where(tiny, 0.0, np.arctan2(cn[..., 0], ab[..., 0]))
    return PlaneRotation(a, f, theta)


def apply_rotation(S, x):
    return S.apply(x)


@dataclass
class Polyline:
    """Planar polyline; ``closed`` joins the last vertex back to the first."""

    vertices: np.ndarray
    closed: bool = False

    def __post_init__(self):
        v = np.asarray(self.vertices, dtype=float)
        if v.ndim != 2 or v.shape[1] != 2:
            raise GeometryError("polyline vertices must have shape (n, 2)")
        self.vertices = v

    def reversed(self):
        return Polyline(self.vertices[::-1].copy(), self.closed)

    def __len__(self):
        return len(self.vertices)


def _point_segment_distance(c, a, b):
    ab = b - a
    ll = np.sum(ab * ab, axis=-1)
    t = np.where(ll > 0, np.sum((c - a) * ab, axis=-1) / np.where(ll > 0, ll, 1.0), 0.0)
    t = np.clip(t, 0.0, 1.0)
    q = a + t[..., None] * ab
    return np.linalg.norm(c - q, axis=-1)


def winding_number(poly, center=(0.0, 0.0)):
    """Signed number of turns of a closed polyline around ``center``."""
    v = np.asarray(poly.vertices, dtype=float) - np.asarray(center, dtype=float)
    if len(v) < 2:
        return 0
    a = v
    b = np.roll(v, -1, axis=0)
    if not poly.closed and np.allclose(v[0], v[-1]):
        a, b = v[:-1], v[1:]
    scale = max(1.0, float(np.max(np.abs(v))))
    if np.min(_point_segment_distance(np.zeros(2), a, b)) <= GEO_TOL * scale:
        raise GeometryError("degenerate query")
    cross = a[:, 0] * b[:, 1] - a[:, 1] * b[:, 0]
    dot = np.sum(a * b, axis=-1)
    total = float(np.sum(np.arctan2(cross, dot)))
    return int(np.round(total / (2.0 * np.pi)))


def min_distance_to_origin(poly):
    v = poly.vertices
    b = np.roll(v, -1, axis=0) if poly.closed else v[1:]
    a = v if poly.closed else v[:-1]
    if len(a) == 0:
        return float(np.linalg.norm(v[0]))
    return float(np.min(_point_segment_distance(np.zeros(2), a, b)))


def default_cell(vertices):
    """Hash-grid cell size: about four times the median segment length."""
    seg = np.linalg.norm(np.diff(vertices, axis=0), axis=1)
    seg = seg[seg > 0]
    if len(seg) == 0:
        return 1.0
    return 4.0 * float(np.median(seg))


def loop_from_hit(vertices, hit):
    """Closed polyline ``[P, v[i+1], ..., v[s], P]`` from a detector hit."""
    i, s, px, py, _ = hit
    p = np.array([[px, py]])
    body = np.asarray(vertices[i + 1:s + 1], dtype=float)
    return Polyline(np.vstack([p, body]), closed=True)


def extract_surrounding_loop(traj, r, cell=None):
    """First closed sub-loop of ``traj`` that winds around 0 outside ``B_r``.

    The trajectory is scanned segment by segment; a crossing of two
    segments whose polar angles, unwrapped along the path, differ by a
    nonzero multiple of ``2 pi`` closes a loop with nonzero winding number.
    Only stretches of the path staying at distance ``> r`` from the origin
    are considered.  Returns ``None`` when no such loop exists.
    """
    if r <= 0:
        raise GeometryError("r must be positive")
    v = np.asarray(traj.vertices, dtype=float)
    if traj.closed:
        v = np.vstack([v, v[:1]])
    if len(v) < 4:
        return None
    if cell is None:
        cell = default_cell(v)
    det = _backend.LoopDetector(float(r), float(cell))
    offset = 0
    for j in range(len(v)):
        hit = det.add(float(v[j, 0]), float(v[j, 1]))
        if hit is None:
            continue
        i, s, px, py, k = hit
        hit = (i + offset, s + offset, px, py, k)
        loop = loop_from_hit(v, hit)
        if abs(winding_number(loop)) >= 1 and min_distance_to_origin(loop) > r:
            return loop
        # numerically inconsistent crossing: restart the search at this vertex
        det = _backend.LoopDetector(float(r), float(cell))
        det.add(float(v[j, 0]), float(v[j, 1]))
        offset = j
    return None


def brute_force_surrounding_loop(traj, r):
    """Quadratic reference for :func:`extract_surrounding_loop` (testing aid).

    Tests every pair of non-adjacent segments; returns ``True`` when some
    crossing closes a loop of nonzero winding number at distance ``> r``.
    """
    v = np.asarray(traj.vertices, dtype=float)
    n = len(v) - 1
    for s in range(n):
        for i in range(s - 1):
            pt = _segment_intersection(v[i], v[i + 1], v[s], v[s + 1])
            if pt is None:
                continue
            loop = Polyline(np.vstack([pt, v[i + 1:s + 1]]), closed=True)
            try:
                w = winding_number(loop)
            except GeometryError:
                continue
            if w != 0 and min_distance_to_origin(loop) > r:
                return True
    return False


def _segment_intersection(p1, p2, q1, q2):
    from ._pycore import segment_intersection
    hit = segment_intersection(*p1, *p2, *q1, *q2)
    return None if hit is None else np.array(hit)
