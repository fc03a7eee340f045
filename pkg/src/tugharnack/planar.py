"""Planar loop construction around the unit disc.

A chain of seven rectangles ``Q_1, ..., Q_7`` with target edges
``Gamma_n`` is arranged so that ``0`` lies in ``Q_1``, each target edge lies
inside the next rectangle, and ``Q_2, ..., Q_7`` wrap once around the
annulus ``1 < |x| < 4``.  Any curve that crosses each ``Q_n`` to its target
edge in turn must then contain a closed sub-curve surrounding ``B_1``.

The game experiment lets player I pull toward the current target edge
while player II plays a fixed adversary, and measures how often the
trajectory closes such a loop.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from . import _backend
from .game import Strategy
from .geometry import Polyline, extract_surrounding_loop, min_distance_to_origin, winding_number
from .parallel import map_ordered
from .rng import MASK64, mix64, stream

ADVERSARIES = {"pull_away": 0, "random": 1}


class PlanarError(ValueError):
    pass


@dataclass(frozen=True)
class Rect:
    """Rectangle with centre, half side lengths and rotation angle.

    Vertices run counter-clockwise from the lower-left corner; edge ``i``
    joins vertex ``i`` to vertex ``i + 1`` (0 bottom, 1 right, 2 top,
    3 left before rotation).
    """

    center: tuple
    half: tuple
    angle: float = 0.0

    @classmethod
    def from_bounds(cls, x0, x1, y0, y1):
        return cls(((x0 + x1) / 2, (y0 + y1) / 2), ((x1 - x0) / 2, (y1 - y0) / 2))

    def vertices(self):
        a, b = self.half
        local = np.array([[-a, -b], [a, -b], [a, b], [-a, b]])
        c, s = math.cos(self.angle), math.sin(self.angle)
        rot = np.array([[c, -s], [s, c]])
        return local @ rot.T + np.asarray(self.center, dtype=float)

    def edge(self, i):
        v = self.vertices()
        return np.array([v[i % 4], v[(i + 1) % 4]])

    def contains(self, pts, strict=True, tol=1e-12):
        """Point-in-rectangle test (``strict``: open rectangle)."""
        pts = np.atleast_2d(np.asarray(pts, dtype=float)) - np.asarray(self.center, dtype=float)
        c, s = math.cos(self.angle), math.sin(self.angle)
        u = pts[:, 0] * c + pts[:, 1] * s
        w = -pts[:, 0] * s + pts[:, 1] * c
        a, b = self.half
        if strict:
            return (np.abs(u) < a - tol) & (np.abs(w) < b - tol)
        return (np.abs(u) <= a + tol) & (np.abs(w) <= b + tol)

    def distance_to_origin(self):
        """Euclidean distance from 0 to the closed rectangle."""
        c, s = math.cos(self.angle), math.sin(self.angle)
        cx, cy = self.center
        u = -(cx * c + cy * s)
        w = -(-cx * s + cy * c)
        a, b = self.half
        du = max(abs(u) - a, 0.0)
        dw = max(abs(w) - b, 0.0)
        return math.hypot(du, dw)

    def sample(self, n, rng):
        a, b = self.half
        local = np.column_stack([rng.uniform(-a, a, n), rng.uniform(-b, b, n)])
        c, s = math.cos(self.angle), math.sin(self.angle)
        return local @ np.array([[c, -s], [s, c]]).T + np.asarray(self.center, dtype=float)


@dataclass
class RectChain:
    rects: list
    targets: list
    inner: float = 1.0
    outer: float = 4.0

    def gamma(self, n):
        """Target edge of rectangle ``n`` (0-based) as a 2x2 array."""
        return self.rects[n].edge(self.targets[n])

    def gammas(self):
        return np.array([self.gamma(n).ravel() for n in range(len(self.rects))])

    def to_json(self):
        return json.dumps({"rectangles": [r.vertices().tolist() for r in self.rects],
                           "target_edges": list(self.targets),
                           "inner": self.inner, "outer": self.outer}, indent=2, sort_keys=True)


def default_rect_chain():
    """Seven axis-parallel rectangles wrapping once, counter-clockwise,
    around the annulus ``1 < |x| < 4``.

    The last rectangle is a horizontal band that cuts the second one
    above its entry edge and ends well to its left, so the final crossing
    must meet the earlier vertical crossing of ``Q_2``.
    """
    b = Rect.from_bounds
    rects = [b(-0.3, 1.3, -0.9, 0.9),
             b(1.05, 2.3, -1.2, 1.7),
             b(-1.7, 2.55, 1.05, 2.3),
             b(-2.3, -1.05, -1.7, 2.55),
             b(-2.55, 1.7, -2.3, -1.05),
             b(1.5, 2.8, -2.55, 1.25),
             b(0.2, 3.0, 1.0, 1.5)]
    # edges: 0 bottom, 1 right, 2 top, 3 left
    targets = [1, 2, 3, 0, 1, 2, 3]
    return RectChain(rects, targets)


# -- verification -------------------------------------------------------------

def _angle_interval_width(pts):
    # width of the smallest arc containing the directions of pts (origin outside hull)
    ang = np.sort(np.mod(np.arctan2(pts[:, 1], pts[:, 0]), 2 * np.pi))
    gaps = np.diff(np.concatenate([ang, ang[:1] + 2 * np.pi]))
    return 2 * np.pi - float(gaps.max())


def _wrap(a):
    return (a + np.pi) % (2 * np.pi) - np.pi


def random_admissible_curve(chain, rng, max_waypoints=4, gamma_margin=1e-6):
    """Polyline from 0 through each rectangle to its target edge.

    Inside ``Q_n`` the curve visits up to ``max_waypoints`` uniform points
    of ``Q_n`` and ends at a uniform point of ``Gamma_n``; rectangles are
    convex, so every piece stays in its rectangle.
    """
    pts = [np.zeros(2)]
    for n in range(len(chain.rects)):
        q = chain.rects[n]
        k = int(rng.integers(0, max_waypoints + 1))
        if k:
            pts.extend(q.sample(k, rng))
        g = chain.gamma(n)
        t = rng.uniform(gamma_margin, 1 - gamma_margin)
        pts.append(g[0] + t * (g[1] - g[0]))
    return Polyline(np.array(pts))


def verify_chain(chain, n_fuzz=10_000, seed=0, margin=0.05):
    """Check the chain conditions and certify the loop property.

    Exact checks: ``0`` in the open ``Q_1``; ``Gamma_n`` inside the open
    ``Q_{n+1}``; ``Q_n`` (``n >= 2``) disjoint from the closed inner disc;
    all rectangles inside the open outer disc.  Certificate: every
    ``Q_n`` (``n >= 2``) subtends an angle below ``pi``, and the target
    edge midpoints advance monotonically in angle by at least
    ``2 pi + margin`` in total.  Fuzzing: ``n_fuzz`` random admissible
    curves must each contain a loop around the inner disc.

    Returns a report with verdict PASS, FAIL, or INDETERMINATE (certificate
    not applicable).
    """
    rects = chain.rects
    n = len(rects)
    checks = {}
    checks["origin_in_Q1"] = bool(rects[0].contains(np.zeros(2))[0])
    cond1 = []
    for i in range(n - 1):
        g = chain.gamma(i)
        cond1.append(bool(np.all(rects[i + 1].contains(g))))
    checks["gamma_inside_next"] = cond1
    dist = [r.distance_to_origin() for r in rects]
    checks["avoid_inner"] = [bool(d > chain.inner) for d in dist[1:]]
    checks["inside_outer"] = [bool(np.all(np.linalg.norm(r.vertices(), axis=1) < chain.outer))
                              for r in rects]
    exact_ok = (checks["origin_in_Q1"] and all(cond1) and all(checks["avoid_inner"])
                and all(checks["inside_outer"]))
    widths = [_angle_interval_width(r.vertices()) for r in rects[1:]]
    checks["angular_width"] = widths
    cert_b = all(w < np.pi for w in widths)
    mids = np.array([chain.gamma(i).mean(axis=0) for i in range(n)])
    ang = np.arctan2(mids[:, 1], mids[:, 0])
    steps = _wrap(np.diff(ang))
    progress = float(np.sum(steps))
    monotone = bool(np.all(steps > 0) or np.all(steps < 0))
    checks["progression"] = progress
    cert_c = monotone and abs(progress) >= 2 * np.pi + margin
    fuzz_fail = 0
    if exact_ok and n_fuzz:
        rng = stream(seed, 0x9A7)
        for _ in range(n_fuzz):
            curve = random_admissible_curve(chain, rng)
            if extract_surrounding_loop(curve, chain.inner) is None:
                fuzz_fail += 1
    checks["fuzz_curves"] = int(n_fuzz)
    checks["fuzz_failures"] = int(fuzz_fail)
    if not exact_ok or fuzz_fail:
        verdict = "FAIL"
    elif not (cert_b and cert_c):
        verdict = "INDETERMINATE"
    else:
        verdict = "PASS"
    failed = []
    if not checks["origin_in_Q1"]:
        failed.append("origin")
    if not all(cond1):
        failed.append("condition 1")
    if not all(checks["avoid_inner"]):
        failed.append("condition 2")
    if not all(checks["inside_outer"]):
        failed.append("containment")
    if fuzz_fail:
        failed.append("fuzz")
    return {"verdict": verdict, "failed": failed, "certificate": {"b": cert_b, "c": cert_c},
            "checks": checks}


# -- strategies and experiment -------------------------------------------------

def nearest_on_segment(x, a, b):
    x = np.atleast_2d(np.asarray(x, dtype=float))
    ab = b - a
    t = np.clip(((x - a) @ ab) / (ab @ ab), 0.0, 1.0)
    return a + t[:, None] * ab


class PullToEdge(Strategy):
    """Step ``eps`` toward the nearest point of a target segment."""

    name = "pull_to_edge"

    def __init__(self, gamma):
        self.gamma = np.asarray(gamma, dtype=float)

    def move(self, x, cfg, rng):
        x = np.atleast_2d(np.asarray(x, dtype=float))
        q = nearest_on_segment(x, self.gamma[0], self.gamma[1])
        diff = q - x
        n = np.linalg.norm(diff, axis=1, keepdims=True)
        return np.where(n > 0, cfg.eps * diff / np.where(n > 0, n, 1.0), 0.0)

    def arrived(self, x, eps, alpha):
        """Within ``alpha * eps`` of the target (counted as exit via the target)."""
        x = np.atleast_2d(np.asarray(x, dtype=float))
        q = nearest_on_segment(x, self.gamma[0], self.gamma[1])
        return np.linalg.norm(q - x, axis=1) < alpha * eps


def rect_exit_strategy(Q, gamma, eps):
    """Pull-to-edge strategy for rectangle ``Q`` and its edge ``gamma``."""
    gamma = np.asarray(gamma, dtype=float)
    v = Q.vertices()
    if not any(np.allclose(gamma, [v[i], v[(i + 1) % 4]]) for i in range(4)):
        raise PlanarError("target is not an edge of the rectangle")
    return PullToEdge(gamma)


def rect_exit_probability(Q, gamma, x0, p, eps, trials, seed=0, adversary="pull_away",
                          max_steps=1_000_000):
    """Fraction of games that leave ``Q`` via ``gamma``.

    Player I pulls toward ``gamma``; player II plays ``adversary``.  A
    game exits via the target once within ``alpha * eps`` of it and fails
    when it leaves ``Q`` elsewhere.  Returns ``(p_hat, ci_lo, ci_hi)``.
    """
    if trials <= 0:
        raise PlanarError("empty experiment")
    strat = rect_exit_strategy(Q, gamma, eps)
    R = math.sqrt(1.0 / (p - 1.0))
    alpha = alpha_for(p)
    rng = stream(seed, 0x5EC7, ADVERSARIES[adversary])
    x = np.tile(np.asarray(x0, dtype=float), (trials, 1))
    live = np.ones(trials, dtype=bool)
    hit = np.zeros(trials, dtype=bool)
    for _ in range(max_steps):
        idx = np.nonzero(live)[0]
        if idx.size == 0:
            break
        xi = x[idx]
        arrived = strat.arrived(xi, eps, alpha)
        hit[idx[arrived]] = True
        live[idx[arrived]] = False
        idx, xi = idx[~arrived], xi[~arrived]
        if idx.size == 0:
            break
        pull = strat.move(xi, _EpsOnly(eps), rng)
        coin = rng.random(idx.size) < 0.5
        if adversary == "pull_away":
            other = -pull
        else:
            ang = rng.uniform(0, 2 * np.pi, idx.size)
            other = eps * np.column_stack([np.cos(ang), np.sin(ang)])
        v = np.where(coin[:, None], pull, other)
        sg = np.where(rng.random(idx.size) < 0.5, R, -R)[:, None]
        xi = xi + v + sg * np.column_stack([-v[:, 1], v[:, 0]])
        x[idx] = xi
        out = ~Q.contains(xi, strict=False)
        live[idx[out]] = False
    k = int(hit.sum())
    lo, hi = wilson_interval(k, trials)
    return k / trials, lo, hi


class _EpsOnly:
    def __init__(self, eps):
        self.eps = eps


def alpha_for(p):
    """Arrival radius factor ``1/sqrt(p-1) + 1``."""
    return 1.0 / math.sqrt(p - 1.0) + 1.0


def wilson_interval(k, n, z=1.96):
    if n == 0:
        return 0.0, 1.0
    ph = k / n
    den = 1 + z * z / n
    c = (ph + z * z / (2 * n)) / den
    h = z * math.sqrt(ph * (1 - ph) / n + z * z / (4 * n * n)) / den
    return max(0.0, c - h), min(1.0, c + h)


@dataclass
class LoopExperiment:
    p: float
    eps: float
    trials: int
    alpha: float
    successes: int
    p_hat: float
    ci_lo: float
    ci_hi: float
    capped_fraction: float
    adversary: str
    per_adversary: dict = field(default_factory=dict)

    @property
    def reliable(self):
        return self.capped_fraction <= 0.5

    def row(self):
        return {"p": self.p, "eps": self.eps, "trials": self.trials, "successes": self.successes,
                "p_hat": self.p_hat, "ci_lo": self.ci_lo, "ci_hi": self.ci_hi,
                "capped_fraction": self.capped_fraction}


CHUNK = 256


def _trial_chunk(args):
    gam, R, eps, alpha, outer, code, key, first, n, cap, inner, cell = args
    return _backend.planar_trials(gam, R, eps, alpha, outer, code, key, first, n, cap, inner, cell)


def experiment_key(seed, p, adversary):
    """Stream key for one (seed, p, adversary) experiment."""
    pbits = int(np.float64(p).view(np.uint64))
    return mix64((mix64(int(seed) & MASK64) ^ pbits) + ADVERSARIES[adversary]) & MASK64


def run_trials(p, eps, trials, chain, adversary, seed=0, cap=200_000, workers=1):
    """Raw per-trial outcomes for one adversary."""
    if trials <= 0:
        raise PlanarError("empty experiment")
    if not p > 1:
        raise PlanarError("p must exceed 1")
    R = math.sqrt(1.0 / (p - 1.0))
    alpha = alpha_for(p)
    gam = chain.gammas()
    key = experiment_key(seed, p, adversary)
    code = ADVERSARIES[adversary]
    cell = 4.0 * eps * math.sqrt(1 + R * R)
    tasks = [(gam, R, eps, alpha, chain.outer, code, key, s, min(CHUNK, trials - s), cap,
              chain.inner, cell) for s in range(0, trials, CHUNK)]
    parts = map_ordered(_trial_chunk, tasks, workers)
    return {k: np.concatenate([pt[k] for pt in parts]) for k in parts[0]}


def estimate_loop_probability(p, eps, trials, chain=None, seed=0, adversaries=("pull_away", "random"),
                              cap=200_000, workers=1):
    """Loop-closing probability against the worst adversary of a battery.

    Player I plays the pull-to-edge strategy of the current rectangle and
    moves on to the next target once within ``alpha * eps`` of the
    current one.  A trial succeeds when the trajectory closes a loop
    around the inner disc before leaving ``B_4`` (up to the terminal
    margin), before the step cap, and before completing the chain.
    """
    chain = default_rect_chain() if chain is None else chain
    if trials <= 0:
        raise PlanarError("empty experiment")
    if not p > 1:
        raise PlanarError("p must exceed 1")
    thickness = min(2 * min(r.half) for r in chain.rects)
    if (math.sqrt(1 / (p - 1)) + 1) * eps >= thickness / 4:
        raise PlanarError("eps too large for the rectangle thickness")
    per = {}
    for adv in adversaries:
        out = run_trials(p, eps, trials, chain, adv, seed, cap, workers)
        k = int(out["success"].sum())
        lo, hi = wilson_interval(k, trials)
        per[adv] = {"successes": k, "p_hat": k / trials, "ci_lo": lo, "ci_hi": hi,
                    "capped_fraction": float(out["capped"].mean()),
                    "exited_fraction": float(out["exited"].mean()),
                    "completed_fraction": float(((out["success"] == 0) & (out["capped"] == 0)
                                                 & (out["exited"] == 0)).mean()),
                    "mean_steps": float(out["steps"].mean())}
    worst = min(per, key=lambda a: (per[a]["p_hat"], a))
    w = per[worst]
    return LoopExperiment(p, eps, trials, alpha_for(p), w["successes"], w["p_hat"], w["ci_lo"],
                          w["ci_hi"], w["capped_fraction"], worst, per)


def fit_planar_constant(experiments):
    """Least-squares fit ``ln p_hat = a - C / (p - 1)``; returns ``(C, R^2)``."""
    if len(experiments) < 3:
        raise PlanarError("need at least three experiments")
    ps = np.array([e.p for e in experiments], dtype=float)
    if np.unique(ps).size < 2:
        raise PlanarError("degenerate design: all p equal")
    if len(np.unique(ps)) < 3:
        raise PlanarError("need three distinct values of p")
    if any(not getattr(e, "reliable", True) for e in experiments):
        raise PlanarError("unreliable experiment in the fit")
    ph = np.array([e.p_hat for e in experiments], dtype=float)
    if np.any(ph <= 0):
        raise PlanarError("zero success count: log undefined")
    x = -1.0 / (ps - 1.0)
    y = np.log(ph)
    A = np.column_stack([np.ones_like(x), x])
    coef, *_ = np.linalg.lstsq(A, y, rcond=None)
    resid = y - A @ coef
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - float(np.sum(resid ** 2)) / ss_tot if ss_tot > 0 else 1.0
    return float(coef[1]), r2


def check_loop(xy, r=1.0):
    """Re-extract and re-check a loop from a planar trajectory."""
    curve = xy if isinstance(xy, Polyline) else Polyline(xy)
    loop = extract_surrounding_loop(curve, r)
    if loop is None:
        return None
    return {"winding": winding_number(loop), "min_distance": min_distance_to_origin(loop)}
