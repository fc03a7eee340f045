# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot kernels.

Every routine here has a pure-Python twin in :mod:`tugharnack._pycore` that
performs the same floating-point operations in the same order; the test
suite checks that both produce identical output.
"""

import numpy as np
cimport numpy as cnp
from libc.math cimport sqrt, floor, atan2, cos, sin, fabs, M_PI
from libc.stdlib cimport malloc, realloc, free
from libc.stdint cimport uint64_t, int64_t

cnp.import_array()

cdef double TWO_PI = 2.0 * M_PI
cdef double GEO_TOL = 1e-12
DEF N_BUCKETS = 16384

cdef uint64_t GOLDEN = 0x9E3779B97F4A7C15ULL
cdef uint64_t COUNTER_MUL = 0xD1B54A32D192ED03ULL


cdef inline uint64_t mix64(uint64_t z) nogil:
    z = z + GOLDEN
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL
    return z ^ (z >> 31)


cdef inline uint64_t c_stream_key(uint64_t key, uint64_t index) nogil:
    return mix64(key ^ mix64(index))


cdef inline uint64_t c_draw(uint64_t skey, uint64_t counter) nogil:
    return mix64(skey + counter * COUNTER_MUL)


cdef inline double c_to_unit(uint64_t bits) nogil:
    return <double>(bits >> 11) * (1.0 / 9007199254740992.0)


def dpp_sweep(const double[::1] u, double[::1] out, const int64_t[::1] points,
              const int64_t[::1] offsets, const double[::1] coefs,
              const int64_t[::1] move_ptr):
    """One Jacobi sweep of the ``1/2 max + 1/2 min`` operator in difference
    form; returns the sup-norm change at the updated points."""
    cdef Py_ssize_t n_pts = points.shape[0]
    cdef Py_ssize_t n_moves = move_ptr.shape[0] - 1
    cdef Py_ssize_t a, m, k
    cdef int64_t p
    cdef double s, mx, mn, up, step, diff, res = 0.0
    with nogil:
        for a in range(n_pts):
            p = points[a]
            up = u[p]
            mx = 0.0
            mn = 0.0
            for m in range(n_moves):
                s = 0.0
                for k in range(move_ptr[m], move_ptr[m + 1]):
                    s = s + coefs[k] * (u[p + offsets[k]] - up)
                if m == 0:
                    mx = s
                    mn = s
                else:
                    if s > mx:
                        mx = s
                    if s < mn:
                        mn = s
            step = 0.5 * (mx + mn)
            out[p] = up + step
            diff = fabs(step)
            if diff > res:
                res = diff
    return res


cdef inline double wrap_angle(double a) nogil:
    if a > M_PI:
        a -= TWO_PI
    elif a <= -M_PI:
        a += TWO_PI
    return a


cdef double seg_dist0(double ax, double ay, double bx, double by) nogil:
    cdef double dx = bx - ax, dy = by - ay
    cdef double ll = dx * dx + dy * dy
    cdef double t, qx, qy
    if ll == 0.0:
        return sqrt(ax * ax + ay * ay)
    t = -(ax * dx + ay * dy) / ll
    if t < 0.0:
        t = 0.0
    elif t > 1.0:
        t = 1.0
    qx = ax + t * dx
    qy = ay + t * dy
    return sqrt(qx * qx + qy * qy)


cdef int seg_intersect(double p1x, double p1y, double p2x, double p2y,
                       double q1x, double q1y, double q2x, double q2y,
                       double *ox, double *oy) nogil:
    cdef double rx = p2x - p1x, ry = p2y - p1y
    cdef double sx = q2x - q1x, sy = q2y - q1y
    cdef double lr = sqrt(rx * rx + ry * ry)
    cdef double ls = sqrt(sx * sx + sy * sy)
    cdef double den, wx, wy, t, uu, ll, t0, t1, lo, hi
    if lr == 0.0 or ls == 0.0:
        return 0
    den = rx * sy - ry * sx
    wx = q1x - p1x
    wy = q1y - p1y
    if fabs(den) > GEO_TOL * lr * ls:
        t = (wx * sy - wy * sx) / den
        uu = (wx * ry - wy * rx) / den
        if -GEO_TOL <= t <= 1.0 + GEO_TOL and -GEO_TOL <= uu <= 1.0 + GEO_TOL:
            ox[0] = p1x + t * rx
            oy[0] = p1y + t * ry
            return 1
        return 0
    if fabs(wx * ry - wy * rx) > GEO_TOL * lr * (lr + sqrt(wx * wx + wy * wy)):
        return 0
    ll = lr * lr
    t0 = (wx * rx + wy * ry) / ll
    t1 = ((q2x - p1x) * rx + (q2y - p1y) * ry) / ll
    lo = t0 if t0 < t1 else t1
    hi = t1 if t0 < t1 else t0
    if lo < 0.0:
        lo = 0.0
    if hi > 1.0:
        hi = 1.0
    if lo > hi + GEO_TOL:
        return 0
    ox[0] = p1x + lo * rx
    oy[0] = p1y + lo * ry
    return 1


cdef struct Detector:
    double r
    double cell
    Py_ssize_t n_vert
    Py_ssize_t cap_vert
    double *xs
    double *ys
    double *t0
    double *t1
    int64_t *run
    int64_t run_id
    # bucket chains (insertion order preserved via tail pointers)
    int64_t *head
    int64_t *tail
    Py_ssize_t n_ent
    Py_ssize_t cap_ent
    int64_t *ent_seg
    int64_t *ent_next
    int found
    int64_t hit_i
    int64_t hit_s
    double hit_x
    double hit_y
    int64_t hit_k


cdef int det_init(Detector *d, double r, double cell) nogil:
    cdef Py_ssize_t b
    d.r = r
    d.cell = cell
    d.n_vert = 0
    d.cap_vert = 1024
    d.xs = <double*>malloc(d.cap_vert * sizeof(double))
    d.ys = <double*>malloc(d.cap_vert * sizeof(double))
    d.t0 = <double*>malloc(d.cap_vert * sizeof(double))
    d.t1 = <double*>malloc(d.cap_vert * sizeof(double))
    d.run = <int64_t*>malloc(d.cap_vert * sizeof(int64_t))
    d.run_id = 0
    d.head = <int64_t*>malloc(N_BUCKETS * sizeof(int64_t))
    d.tail = <int64_t*>malloc(N_BUCKETS * sizeof(int64_t))
    for b in range(N_BUCKETS):
        d.head[b] = -1
        d.tail[b] = -1
    d.n_ent = 0
    d.cap_ent = 4096
    d.ent_seg = <int64_t*>malloc(d.cap_ent * sizeof(int64_t))
    d.ent_next = <int64_t*>malloc(d.cap_ent * sizeof(int64_t))
    d.found = 0
    if (d.xs == NULL or d.ys == NULL or d.t0 == NULL or d.t1 == NULL or d.run == NULL
            or d.head == NULL or d.tail == NULL or d.ent_seg == NULL or d.ent_next == NULL):
        return -1
    return 0


cdef void det_free(Detector *d) nogil:
    free(d.xs)
    free(d.ys)
    free(d.t0)
    free(d.t1)
    free(d.run)
    free(d.head)
    free(d.tail)
    free(d.ent_seg)
    free(d.ent_next)
    d.xs = NULL
    d.ys = NULL
    d.t0 = NULL
    d.t1 = NULL
    d.run = NULL
    d.head = NULL
    d.tail = NULL
    d.ent_seg = NULL
    d.ent_next = NULL


cdef int det_grow_vert(Detector *d) nogil:
    cdef Py_ssize_t nc = 2 * d.cap_vert
    cdef double *a = <double*>realloc(d.xs, nc * sizeof(double))
    if a == NULL:
        return -1
    d.xs = a
    a = <double*>realloc(d.ys, nc * sizeof(double))
    if a == NULL:
        return -1
    d.ys = a
    a = <double*>realloc(d.t0, nc * sizeof(double))
    if a == NULL:
        return -1
    d.t0 = a
    a = <double*>realloc(d.t1, nc * sizeof(double))
    if a == NULL:
        return -1
    d.t1 = a
    cdef int64_t *b = <int64_t*>realloc(d.run, nc * sizeof(int64_t))
    if b == NULL:
        return -1
    d.run = b
    d.cap_vert = nc
    return 0


cdef int det_push_entry(Detector *d, int64_t bucket, int64_t seg) nogil:
    cdef Py_ssize_t nc
    cdef int64_t *b
    if d.n_ent == d.cap_ent:
        nc = 2 * d.cap_ent
        b = <int64_t*>realloc(d.ent_seg, nc * sizeof(int64_t))
        if b == NULL:
            return -1
        d.ent_seg = b
        b = <int64_t*>realloc(d.ent_next, nc * sizeof(int64_t))
        if b == NULL:
            return -1
        d.ent_next = b
        d.cap_ent = nc
    d.ent_seg[d.n_ent] = seg
    d.ent_next[d.n_ent] = -1
    if d.tail[bucket] < 0:
        d.head[bucket] = d.n_ent
    else:
        d.ent_next[d.tail[bucket]] = d.n_ent
    d.tail[bucket] = d.n_ent
    d.n_ent += 1
    return 0


cdef inline int64_t bucket_of(int64_t ix, int64_t iy) nogil:
    return ((ix * 73856093) ^ (iy * 19349663)) & (N_BUCKETS - 1)


cdef int det_add(Detector *d, double x, double y) nogil:
    """Returns 1 when this vertex closes a loop, 0 otherwise, -1 on OOM."""
    cdef Py_ssize_t s, i
    cdef double ax, ay, start, end, mid, px = 0.0, py = 0.0, ang, ti, ts
    cdef int64_t rid, ix, iy, ix0, ix1, iy0, iy1, b, e, k
    cdef int hit = 0
    if d.n_vert == d.cap_vert:
        if det_grow_vert(d) < 0:
            return -1
    d.xs[d.n_vert] = x
    d.ys[d.n_vert] = y
    d.n_vert += 1
    s = d.n_vert - 2
    if s < 0:
        return 0
    ax = d.xs[s]
    ay = d.ys[s]
    if seg_dist0(ax, ay, x, y) <= d.r:
        d.run[s] = -1
        d.t0[s] = 0.0
        d.t1[s] = 0.0
        return 0
    if s == 0 or d.run[s - 1] < 0:
        d.run_id += 1
        start = atan2(ay, ax)
    else:
        start = d.t1[s - 1]
    end = start + wrap_angle(atan2(y, x) - atan2(ay, ax))
    rid = d.run_id
    d.run[s] = rid
    d.t0[s] = start
    d.t1[s] = end
    if d.found:
        return 0
    mid = 0.5 * (start + end)
    ix0 = <int64_t>floor((ax if ax < x else x) / d.cell)
    ix1 = <int64_t>floor((x if ax < x else ax) / d.cell)
    iy0 = <int64_t>floor((ay if ay < y else y) / d.cell)
    iy1 = <int64_t>floor((y if ay < y else ay) / d.cell)
    ix = ix0
    while ix <= ix1 and not hit:
        iy = iy0
        while iy <= iy1 and not hit:
            b = bucket_of(ix, iy)
            e = d.head[b]
            while e >= 0:
                i = d.ent_seg[e]
                e = d.ent_next[e]
                if i >= s - 1 or d.run[i] != rid:
                    continue
                if fabs(mid - 0.5 * (d.t0[i] + d.t1[i])) <= M_PI:
                    continue
                if not seg_intersect(d.xs[i], d.ys[i], d.xs[i + 1], d.ys[i + 1],
                                     ax, ay, x, y, &px, &py):
                    continue
                ang = atan2(py, px)
                ti = d.t0[i] + wrap_angle(ang - atan2(d.ys[i], d.xs[i]))
                ts = start + wrap_angle(ang - atan2(ay, ax))
                k = <int64_t>floor((ts - ti) / TWO_PI + 0.5)
                if k != 0:
                    hit = 1
                    d.hit_i = i
                    d.hit_s = s
                    d.hit_x = px
                    d.hit_y = py
                    d.hit_k = k
                    break
            iy += 1
        ix += 1
    for ix in range(ix0, ix1 + 1):
        for iy in range(iy0, iy1 + 1):
            if det_push_entry(d, bucket_of(ix, iy), s) < 0:
                return -1
    if hit:
        d.found = 1
        return 1
    return 0


cdef class LoopDetector:
    """Online search for a self-intersection closing a loop around 0.

    See :class:`tugharnack._pycore.LoopDetector` for the algorithm.
    """
    cdef Detector d

    def __cinit__(self, double r, double cell):
        if det_init(&self.d, r, cell) < 0:
            det_free(&self.d)
            raise MemoryError()

    def __dealloc__(self):
        det_free(&self.d)

    @property
    def found(self):
        if not self.d.found:
            return None
        return (self.d.hit_i, self.d.hit_s, self.d.hit_x, self.d.hit_y, self.d.hit_k)

    def add(self, double x, double y):
        cdef int rc = det_add(&self.d, x, y)
        if rc < 0:
            raise MemoryError()
        if rc == 1:
            return self.found
        return None


def find_loop(xy, double r, double cell):
    """Scan a whole polyline; first loop found or ``None``."""
    cdef double[:, ::1] pts = np.ascontiguousarray(xy, dtype=np.float64)
    cdef Py_ssize_t j
    cdef Detector d
    cdef int rc = 0
    if det_init(&d, r, cell) < 0:
        det_free(&d)
        raise MemoryError()
    try:
        for j in range(pts.shape[0]):
            rc = det_add(&d, pts[j, 0], pts[j, 1])
            if rc != 0:
                break
        if rc < 0:
            raise MemoryError()
        if rc == 1:
            return (d.hit_i, d.hit_s, d.hit_x, d.hit_y, d.hit_k)
        return None
    finally:
        det_free(&d)


def planar_trials(gammas, double R, double eps, double alpha, double outer,
                  int adversary, key, first_trial, Py_ssize_t n_trials,
                  int64_t cap, double r_inner, double cell):
    """Chained pull-to-edge trials.

    Each trial starts at the origin.  Player I pulls ``eps`` toward the
    nearest point of the current target segment ``gammas[stage]`` (rows
    ``ax, ay, bx, by``); reaching its ``alpha*eps``-neighbourhood advances
    the stage.  Player II plays ``adversary`` (0: pull away from the
    target, 1: uniformly random direction).  Counter ``2n`` of the trial's
    stream gives the coin (bit 0) and the noise sign (bit 1); counter
    ``2n+1`` the random adversary angle.  A trial succeeds when the path
    closes a loop around ``B_r_inner``, and stops on exit from
    ``B_{outer - (R+1) eps}``, on completing the chain, or at ``cap`` steps.
    """
    cdef double[:, ::1] g = np.ascontiguousarray(gammas, dtype=np.float64)
    cdef Py_ssize_t n_targets = g.shape[0]
    cdef uint64_t ukey = <uint64_t>(int(key) & 0xFFFFFFFFFFFFFFFF)
    cdef uint64_t ufirst = <uint64_t>(int(first_trial) & 0xFFFFFFFFFFFFFFFF)
    success_a = np.zeros(n_trials, dtype=np.uint8)
    capped_a = np.zeros(n_trials, dtype=np.uint8)
    exited_a = np.zeros(n_trials, dtype=np.uint8)
    stages_a = np.zeros(n_trials, dtype=np.int64)
    steps_a = np.zeros(n_trials, dtype=np.int64)
    cdef unsigned char[::1] success = success_a
    cdef unsigned char[::1] capped = capped_a
    cdef unsigned char[::1] exited = exited_a
    cdef int64_t[::1] stages = stages_a
    cdef int64_t[::1] steps = steps_a
    cdef double terminal_radius = outer - (R + 1.0) * eps
    cdef Py_ssize_t a, stage
    cdef int64_t n
    cdef int done, rc
    cdef uint64_t skey, bits
    cdef double x, y, qx, qy, dx, dy, t, dist, nx, ny, vx, vy, sg, ang
    cdef Detector d
    for a in range(n_trials):
        skey = c_stream_key(ukey, ufirst + <uint64_t>a)
        if det_init(&d, r_inner, cell) < 0:
            det_free(&d)
            raise MemoryError()
        rc = 0
        with nogil:
            x = 0.0
            y = 0.0
            rc = det_add(&d, x, y)
            stage = 0
            n = 0
            done = 0
            while n < cap and rc >= 0:
                dx = g[stage, 2] - g[stage, 0]
                dy = g[stage, 3] - g[stage, 1]
                t = ((x - g[stage, 0]) * dx + (y - g[stage, 1]) * dy) / (dx * dx + dy * dy)
                if t < 0.0:
                    t = 0.0
                elif t > 1.0:
                    t = 1.0
                qx = g[stage, 0] + t * dx
                qy = g[stage, 1] + t * dy
                dist = sqrt((qx - x) * (qx - x) + (qy - y) * (qy - y))
                if dist < alpha * eps:
                    stage += 1
                    if stage == n_targets:
                        done = 1
                        break
                    continue
                nx = (qx - x) / dist
                ny = (qy - y) / dist
                bits = c_draw(skey, <uint64_t>(2 * n))
                if bits & 1:
                    vx = eps * nx
                    vy = eps * ny
                elif adversary == 0:
                    vx = -eps * nx
                    vy = -eps * ny
                else:
                    ang = TWO_PI * c_to_unit(c_draw(skey, <uint64_t>(2 * n + 1)))
                    vx = eps * cos(ang)
                    vy = eps * sin(ang)
                sg = R if (bits >> 1) & 1 else -R
                x = x + vx - sg * vy
                y = y + vy + sg * vx
                n += 1
                rc = det_add(&d, x, y)
                if rc == 1:
                    success[a] = 1
                    break
                if sqrt(x * x + y * y) > terminal_radius:
                    exited[a] = 1
                    break
        det_free(&d)
        if rc < 0:
            raise MemoryError()
        if not done and not success[a] and not exited[a]:
            capped[a] = 1
        stages[a] = stage
        steps[a] = n
    return {"success": success_a, "capped": capped_a, "exited": exited_a,
            "stage": stages_a, "steps": steps_a}
