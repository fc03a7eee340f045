"""Pure-Python/numpy implementations of the hot kernels.

This module mirrors :mod:`tugharnack._core` (Cython) operation for operation,
so both backends produce bit-identical results from the same inputs.  It is
used when the extension is not built, or when ``TUGHARNACK_PURE=1``.
"""

from __future__ import annotations

import math

import numpy as np

from .rng import draw, stream_key, to_unit

TWO_PI = 2.0 * math.pi
GEO_TOL = 1e-12
N_BUCKETS = 1 << 14


def dpp_sweep(u, out, points, offsets, coefs, move_ptr):
    """One Jacobi sweep of the ``1/2 max + 1/2 min`` operator.

    For every flat index ``p`` in ``points`` and every move ``m`` the noise
    average is ``u[p] + sum(coefs[k] * (u[p + offsets[k]] - u[p]))`` over
    the stencil slice ``move_ptr[m]:move_ptr[m + 1]`` (the weights sum to
    one; the difference form keeps constants exact).  Writes ``out[points]``
    and returns the sup-norm change.
    """
    n_moves = len(move_ptr) - 1
    mx = mn = None
    up = u[points]
    for m in range(n_moves):
        s = np.zeros(len(points))
        for k in range(move_ptr[m], move_ptr[m + 1]):
            s = s + coefs[k] * (u[points + offsets[k]] - up)
        if mx is None:
            mx = s
            mn = s.copy()
        else:
            np.maximum(mx, s, out=mx)
            np.minimum(mn, s, out=mn)
    if mx is None:
        return 0.0
    step = 0.5 * (mx + mn)
    out[points] = up + step
    if len(points) == 0:
        return 0.0
    return float(np.max(np.abs(step)))


def _wrap(a):
    # map an angle difference to (-pi, pi]
    if a > math.pi:
        a -= TWO_PI
    elif a <= -math.pi:
        a += TWO_PI
    return a


def segment_distance_to_origin(ax, ay, bx, by):
    dx = bx - ax
    dy = by - ay
    ll = dx * dx + dy * dy
    if ll == 0.0:
        return math.sqrt(ax * ax + ay * ay)
    t = -(ax * dx + ay * dy) / ll
    if t < 0.0:
        t = 0.0
    elif t > 1.0:
        t = 1.0
    qx = ax + t * dx
    qy = ay + t * dy
    return math.sqrt(qx * qx + qy * qy)


def segment_intersection(p1x, p1y, p2x, p2y, q1x, q1y, q2x, q2y):
    """Intersection point of two closed segments, or ``None``.

    Near-tangent and collinear-overlapping pairs count as intersecting
    (relative tolerance ``GEO_TOL``); for an overlap the returned point is
    the start of the overlap along the first segment.
    """
    rx = p2x - p1x
    ry = p2y - p1y
    sx = q2x - q1x
    sy = q2y - q1y
    lr = math.sqrt(rx * rx + ry * ry)
    ls = math.sqrt(sx * sx + sy * sy)
    if lr == 0.0 or ls == 0.0:
        return None
    den = rx * sy - ry * sx
    wx = q1x - p1x
    wy = q1y - p1y
    if abs(den) > GEO_TOL * lr * ls:
        t = (wx * sy - wy * sx) / den
        u = (wx * ry - wy * rx) / den
        if -GEO_TOL <= t <= 1.0 + GEO_TOL and -GEO_TOL <= u <= 1.0 + GEO_TOL:
            return (p1x + t * rx, p1y + t * ry)
        return None
    # parallel: intersect only if collinear
    if abs(wx * ry - wy * rx) > GEO_TOL * lr * (lr + math.sqrt(wx * wx + wy * wy)):
        return None
    ll = lr * lr
    t0 = (wx * rx + wy * ry) / ll
    t1 = ((q2x - p1x) * rx + (q2y - p1y) * ry) / ll
    lo = min(t0, t1)
    hi = max(t0, t1)
    if lo < 0.0:
        lo = 0.0
    if hi > 1.0:
        hi = 1.0
    if lo > hi + GEO_TOL:
        return None
    return (p1x + lo * rx, p1y + lo * ry)


class LoopDetector:
    """Online search for a self-intersection that closes a loop around 0.

    Vertices are fed one at a time.  Each new segment is tested against
    earlier segments of the same run (a maximal stretch of segments at
    distance ``> r`` from the origin) whose unwrapped polar angle differs by
    more than pi; a crossing whose unwrapped angles differ by ``2 pi k``,
    ``k != 0``, closes a loop of winding number ``k`` that stays outside
    ``B_r``.  Candidate segments come from a hashed uniform grid.
    """

    def __init__(self, r, cell):
        self.r = float(r)
        self.cell = float(cell)
        self.xs = []
        self.ys = []
        self.t0 = []
        self.t1 = []
        self.run = []
        self.run_id = 0
        self.buckets = {}
        self.found = None

    def _cells(self, ax, ay, bx, by):
        c = self.cell
        ix0 = int(math.floor(min(ax, bx) / c))
        ix1 = int(math.floor(max(ax, bx) / c))
        iy0 = int(math.floor(min(ay, by) / c))
        iy1 = int(math.floor(max(ay, by) / c))
        for ix in range(ix0, ix1 + 1):
            for iy in range(iy0, iy1 + 1):
                yield ((ix * 73856093) ^ (iy * 19349663)) & (N_BUCKETS - 1)

    def add(self, x, y):
        """Append a vertex; return ``(i, j, px, py, k)`` once a loop closes."""
        xs = self.xs
        ys = self.ys
        xs.append(x)
        ys.append(y)
        s = len(xs) - 2
        if s < 0:
            return None
        ax = xs[s]
        ay = ys[s]
        if segment_distance_to_origin(ax, ay, x, y) <= self.r:
            self.run.append(-1)
            self.t0.append(0.0)
            self.t1.append(0.0)
            return None
        if s == 0 or self.run[s - 1] < 0:
            self.run_id += 1
            start = math.atan2(ay, ax)
        else:
            start = self.t1[s - 1]
        end = start + _wrap(math.atan2(y, x) - math.atan2(ay, ax))
        rid = self.run_id
        self.run.append(rid)
        self.t0.append(start)
        self.t1.append(end)
        if self.found is not None:
            return None
        mid = 0.5 * (start + end)
        cells = list(self._cells(ax, ay, x, y))
        hit = None
        for b in cells:
            for i in self.buckets.get(b, ()):
                if i >= s - 1 or self.run[i] != rid:
                    continue
                if abs(mid - 0.5 * (self.t0[i] + self.t1[i])) <= math.pi:
                    continue
                pt = segment_intersection(xs[i], ys[i], xs[i + 1], ys[i + 1], ax, ay, x, y)
                if pt is None:
                    continue
                ang = math.atan2(pt[1], pt[0])
                ti = self.t0[i] + _wrap(ang - math.atan2(ys[i], xs[i]))
                ts = start + _wrap(ang - math.atan2(ay, ax))
                k = int(math.floor((ts - ti) / TWO_PI + 0.5))
                if k != 0:
                    hit = (i, s, pt[0], pt[1], k)
                    break
            if hit is not None:
                break
        for b in cells:
            self.buckets.setdefault(b, []).append(s)
        if hit is not None:
            self.found = hit
        return hit


def find_loop(xy, r, cell):
    """Scan a whole polyline; first loop found or ``None``."""
    det = LoopDetector(r, cell)
    for x, y in xy:
        hit = det.add(float(x), float(y))
        if hit is not None:
            return hit
    return None


def _nearest_on_segment(x, y, ax, ay, bx, by):
    dx = bx - ax
    dy = by - ay
    t = ((x - ax) * dx + (y - ay) * dy) / (dx * dx + dy * dy)
    if t < 0.0:
        t = 0.0
    elif t > 1.0:
        t = 1.0
    return ax + t * dx, ay + t * dy


def planar_trials(gammas, R, eps, alpha, outer, adversary, key, first_trial,
                  n_trials, cap, r_inner, cell):
    """Chained pull-to-edge trials in ``B_outer``; see ``_core.planar_trials``."""
    n_targets = len(gammas)
    success = np.zeros(n_trials, dtype=np.uint8)
    capped = np.zeros(n_trials, dtype=np.uint8)
    exited = np.zeros(n_trials, dtype=np.uint8)
    stages = np.zeros(n_trials, dtype=np.int64)
    steps = np.zeros(n_trials, dtype=np.int64)
    terminal_radius = outer - (R + 1.0) * eps
    for a in range(n_trials):
        skey = stream_key(key, first_trial + a)
        det = LoopDetector(r_inner, cell)
        x = 0.0
        y = 0.0
        det.add(x, y)
        stage = 0
        n = 0
        done = False
        while n < cap:
            qx, qy = _nearest_on_segment(x, y, gammas[stage][0], gammas[stage][1],
                                         gammas[stage][2], gammas[stage][3])
            dist = math.sqrt((qx - x) * (qx - x) + (qy - y) * (qy - y))
            if dist < alpha * eps:
                stage += 1
                if stage == n_targets:
                    done = True
                    break
                continue
            nx = (qx - x) / dist
            ny = (qy - y) / dist
            bits = draw(skey, 2 * n)
            if bits & 1:
                vx = eps * nx
                vy = eps * ny
            elif adversary == 0:
                vx = -eps * nx
                vy = -eps * ny
            else:
                ang = TWO_PI * to_unit(draw(skey, 2 * n + 1))
                vx = eps * math.cos(ang)
                vy = eps * math.sin(ang)
            sg = R if (bits >> 1) & 1 else -R
            x = x + vx - sg * vy
            y = y + vy + sg * vx
            n += 1
            if det.add(x, y) is not None:
                success[a] = 1
                break
            if math.sqrt(x * x + y * y) > terminal_radius:
                exited[a] = 1
                break
        if not done and not success[a] and not exited[a]:
            capped[a] = 1
        stages[a] = stage
        steps[a] = n
    return {"success": success, "capped": capped, "exited": exited,
            "stage": stages, "steps": steps}
