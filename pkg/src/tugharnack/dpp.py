"""Value iteration for the discrete game value on a lattice.

The one-step operator is

    u(x) = 1/2 max_v A(x, v) + 1/2 min_v A(x, v),
    A(x, v) = E_w[u(x + v + w)],

at non-terminal lattice points, and ``1/2 (max F + min F)`` over the
terminal cap elsewhere.  Moves range over a finite :class:`MoveSet`; the
noise expectation uses the exact two-point law for ``d = 2`` and a
``K``-node circle rule for ``d = 3``, with multilinear interpolation
between lattice points.  The stencil of each move is the same at every
lattice point, so it is precomputed once as a list of (flat offset,
weight) pairs and applied by the compiled sweep kernel.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from itertools import product

import numpy as np

from . import _backend
from .game import GameConfig, cap_half_angle, cap_points, is_terminal


class FieldError(ValueError):
    pass


@dataclass
class GridField:
    """Lattice values on the box ``lo + h * index``.

    The lattice covers the closed unit ball plus a two-cell skirt used only
    as interpolation support; ``inside`` marks the nodes with ``|x| <= 1``.
    """

    h: float
    lo: np.ndarray
    values: np.ndarray
    meta: dict = field(default_factory=dict)
    radius: float = 1.0

    @property
    def d(self):
        return self.values.ndim

    @property
    def shape(self):
        return self.values.shape

    def axes(self):
        return [self.lo[j] + self.h * np.arange(n) for j, n in enumerate(self.shape)]

    def coords(self):
        """Node coordinates, shape ``shape + (d,)``."""
        return np.stack(np.meshgrid(*self.axes(), indexing="ij"), axis=-1)

    def inside(self):
        return np.linalg.norm(self.coords(), axis=-1) <= self.radius * (1.0 + 1e-12)

    def __call__(self, x):
        return evaluate(self, x)


def lattice(h, d, radius=1.0, skirt=2):
    """Symmetric box lattice ``{i h : |i| <= ceil(radius/h) + skirt}``."""
    n_half = int(math.ceil(radius / h - 1e-9)) + skirt
    lo = np.full(d, -n_half * h)
    shape = (2 * n_half + 1,) * d
    return lo, shape


def evaluate(field, x):
    """Multilinear interpolation of ``field`` at points ``x`` (``|x| <= radius``)."""
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    x = np.atleast_2d(x)
    if np.any(np.linalg.norm(x, axis=-1) > field.radius * (1.0 + 1e-12)):
        raise FieldError("query outside the ball")
    t = (x - field.lo) / field.h
    i0 = np.floor(t).astype(np.int64)
    i0 = np.clip(i0, 0, np.array(field.shape) - 2)
    r = t - i0
    out = np.zeros(len(x))
    for corner in product((0, 1), repeat=field.d):
        c = np.array(corner)
        w = np.prod(np.where(c == 1, r, 1.0 - r), axis=-1)
        out += w * field.values[tuple((i0 + c).T)]
    return out[0] if single else out


# -- moves and noise quadrature -----------------------------------------------

@dataclass
class MoveSet:
    """Finite move set: the zero move and directions scaled by ``eps``."""

    moves: np.ndarray

    def __post_init__(self):
        self.moves = np.asarray(self.moves, dtype=float)

    def __len__(self):
        return len(self.moves)


def _fibonacci_sphere(n):
    i = np.arange(n) + 0.5
    z = 1.0 - 2.0 * i / n
    phi = math.pi * (1.0 + math.sqrt(5.0)) * i
    s = np.sqrt(1.0 - z * z)
    return np.column_stack([s * np.cos(phi), s * np.sin(phi), z])


def directions(d, n_dir=16):
    """Unit directions closed under negation.

    ``d = 2``: ``2 n_dir`` equally spaced angles, built from the first
    quadrant by exact quarter turns (axes and diagonals included).
    ``d = 3``: the 26 lattice neighbour directions plus ``n_dir // 2 + 5``
    Fibonacci points and their negatives (52 directions by default).
    """
    if d == 2:
        q = (2 * n_dir) // 4
        th = (math.pi / 2) * np.arange(q) / q
        c, s = np.cos(th), np.sin(th)
        base = np.column_stack([c, s])
        return np.vstack([base, np.column_stack([-s, c]), -base, np.column_stack([s, -c])])
    if d == 3:
        lat = np.array([v for v in product((-1, 0, 1), repeat=3) if any(v)], dtype=float)
        lat /= np.linalg.norm(lat, axis=1, keepdims=True)
        fib = _fibonacci_sphere(n_dir // 2 + 5)
        return np.vstack([lat, fib, -fib])
    raise FieldError("the lattice solver supports d = 2 and d = 3 only")


def default_moves(d, eps, n_dir=16):
    dirs = directions(d, n_dir)
    return MoveSet(np.vstack([np.zeros((1, d)), eps * dirs]))


def noise_nodes(v, R, eps, k_nodes=16):
    """Quadrature nodes (offsets ``w``) and weights for the noise given move ``v``."""
    v = np.asarray(v, dtype=float)
    d = len(v)
    rad = R * eps
    nv = np.linalg.norm(v)
    if d == 2:
        if nv > 0:
            vp = np.array([-v[1], v[0]]) / nv
            return np.array([rad * vp, -rad * vp]), np.array([0.5, 0.5])
        th = 2 * np.pi * np.arange(k_nodes) / k_nodes
        return rad * np.column_stack([np.cos(th), np.sin(th)]), np.full(k_nodes, 1.0 / k_nodes)
    if d == 3:
        if nv > 0:
            vh = v / nv
            a = np.eye(3)[int(np.argmin(np.abs(vh)))]
            e1 = a - (a @ vh) * vh
            e1 /= np.linalg.norm(e1)
            e2 = np.cross(vh, e1)
            th = 2 * np.pi * np.arange(k_nodes) / k_nodes
            w = rad * (np.cos(th)[:, None] * e1 + np.sin(th)[:, None] * e2)
            return w, np.full(k_nodes, 1.0 / k_nodes)
        pts = _fibonacci_sphere(2 * k_nodes)
        pts = np.vstack([pts, -pts])
        return rad * pts, np.full(len(pts), 1.0 / len(pts))
    raise FieldError("noise quadrature implemented for d = 2 and d = 3")


def noise_average(field, x, v, cfg, k_nodes=16):
    """``E_w[u(x + v + w)]`` by the solver's quadrature.

    ``field`` may be a :class:`GridField` or any vectorised callable.
    """
    x = np.asarray(x, dtype=float)
    w, wt = noise_nodes(v, cfg.R, cfg.eps, k_nodes)
    pts = x + np.asarray(v, dtype=float) + w
    if np.any(np.linalg.norm(pts, axis=-1) > 1.0 + 1e-12):
        raise FieldError("query outside the ball")
    vals = evaluate(field, pts) if isinstance(field, GridField) else np.asarray(field(pts), dtype=float)
    return float(np.sum(wt * vals))


def _stencil(disp, weights, h, strides):
    # (flat offset, weight) pairs for multilinear interpolation at x + disp
    acc = {}
    for dv, wt in zip(disp, weights):
        t = dv / h
        f = np.floor(t)
        r = t - f
        f = f.astype(np.int64)
        for corner in product((0, 1), repeat=len(dv)):
            c = np.array(corner)
            cw = float(np.prod(np.where(c == 1, r, 1.0 - r)))
            if cw == 0.0:
                continue
            off = int(np.dot(f + c, strides))
            acc[off] = acc.get(off, 0.0) + wt * cw
    return list(acc.items())


class DppOperator:
    """Precomputed one-step operator on a fixed lattice."""

    def __init__(self, cfg, h, moves=None, k_nodes=16):
        if cfg.d not in (2, 3):
            raise FieldError("the lattice solver supports d = 2 and d = 3 only")
        self.cfg = cfg
        self.h = float(h)
        self.moves = default_moves(cfg.d, cfg.eps) if moves is None else moves
        if np.any(np.linalg.norm(self.moves.moves, axis=1) > cfg.eps * (1 + 1e-12)):
            raise FieldError("moves must have norm at most eps")
        self.lo, self.shape = lattice(self.h, cfg.d)
        strides = np.array([int(np.prod(self.shape[j + 1:])) for j in range(cfg.d)], dtype=np.int64)
        offsets, coefs, ptr = [], [], [0]
        for v in self.moves.moves:
            w, wt = noise_nodes(v, cfg.R, cfg.eps, k_nodes)
            for off, c in _stencil(v + w, wt, self.h, strides):
                offsets.append(off)
                coefs.append(c)
            ptr.append(len(offsets))
        self.offsets = np.array(offsets, dtype=np.int64)
        self.coefs = np.array(coefs, dtype=float)
        self.move_ptr = np.array(ptr, dtype=np.int64)
        field0 = GridField(self.h, self.lo, np.zeros(self.shape))
        x = field0.coords().reshape(-1, cfg.d)
        nx = np.linalg.norm(x, axis=1)
        term = is_terminal(x, cfg)
        self.interior = np.flatnonzero(~term).astype(np.int64)
        # terminal values are needed up to the interpolation support
        reach = 1.0 + self.h * math.sqrt(cfg.d) + 1e-9
        self.terminal = np.flatnonzero(term & (nx <= reach)).astype(np.int64)
        self.far = np.flatnonzero(term & (nx > reach)).astype(np.int64)
        self.terminal_values = terminal_values(x[self.terminal], cfg)
        self.far_values = cfg.boundary(x[self.far]) if len(self.far) else np.empty(0)
        self.x = x

    def apply_boundary(self, flat):
        flat[self.terminal] = self.terminal_values
        flat[self.far] = self.far_values

    def sweep(self, u, out):
        """One Jacobi sweep from ``u`` into ``out`` (both flat); returns the change."""
        self.apply_boundary(out)
        return _backend.dpp_sweep(u, out, self.interior, self.offsets, self.coefs, self.move_ptr)


def terminal_values(x, cfg):
    """``1/2 (min + max)`` of the data over each point's terminal cap."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    if len(x) == 0:
        return np.empty(0)
    if cfg.d == 2:
        nx = np.linalg.norm(x, axis=1)
        alpha = cap_half_angle(nx, cfg.margin)
        th = np.arctan2(x[:, 1], x[:, 0])[:, None] + alpha[:, None] * np.linspace(-1, 1, cfg.n_arc + 1)
        vals = cfg.boundary(np.stack([np.cos(th), np.sin(th)], axis=-1))
        return 0.5 * (vals.min(axis=1) + vals.max(axis=1))
    out = np.empty(len(x))
    for i, xi in enumerate(x):
        vals = cfg.boundary(cap_points(xi, cfg))
        out[i] = 0.5 * (vals.min() + vals.max())
    return out


_OPERATORS = {}


def operator_for(cfg, h, moves=None):
    key = (cfg.p, cfg.d, cfg.eps, cfg.boundary.key, cfg.n_arc, float(h),
           None if moves is None else moves.moves.tobytes())
    op = _OPERATORS.get(key)
    if op is None:
        if len(_OPERATORS) > 8:
            _OPERATORS.clear()
        op = _OPERATORS[key] = DppOperator(cfg, h, moves)
    return op


def dpp_update(field, cfg, moves=None):
    """Apply the one-step operator once to ``field``."""
    op = operator_for(cfg, field.h, moves)
    if field.shape != op.shape or not np.allclose(field.lo, op.lo):
        raise FieldError("field lattice does not match the solver lattice")
    u = np.ascontiguousarray(field.values, dtype=float).ravel()
    out = u.copy()
    res = op.sweep(u, out)
    meta = dict(field.meta)
    meta["residual"] = res
    return GridField(field.h, field.lo.copy(), out.reshape(op.shape), meta)


def initial_guess(op):
    """Boundary-data extension clipped to the data range."""
    cfg = op.cfg
    u = np.empty(int(np.prod(op.shape)))
    op.apply_boundary(u)
    lo = float(op.terminal_values.min())
    hi = float(op.terminal_values.max())
    if hi == lo:
        u[op.interior] = lo
    else:
        u[op.interior] = np.clip(cfg.boundary.extension(op.x[op.interior]), lo, hi)
    return u


def solve(cfg, h=None, tol=None, max_iter=1_000_000, moves=None, init=None):
    """Iterate the one-step operator to a fixed point.

    Parameters
    ----------
    cfg : GameConfig
    h : float, optional
        Lattice spacing, at most ``eps / 2`` (default ``eps / 2``).
    tol : float, optional
        Sup-norm change at which to stop; default ``1e-8 * osc(F)``.
    max_iter : int
    init : array_like, optional
        Starting values on the lattice; default :func:`initial_guess`.

    Returns
    -------
    GridField
        ``meta`` records iterations, final residual, the residual history
        and ``status`` (``"converged"`` or ``"max_iter"``).
    """
    h = cfg.eps / 2 if h is None else float(h)
    if h > cfg.eps / 2 * (1 + 1e-12):
        raise FieldError("lattice spacing must be at most eps/2")
    op = operator_for(cfg, h, moves)
    u = initial_guess(op) if init is None else np.array(init, dtype=float).ravel()
    if tol is None:
        osc = float(op.terminal_values.max() - op.terminal_values.min())
        tol = 1e-8 * osc if osc > 0 else 1e-14
    if not tol > 0:
        raise FieldError("tol must be positive")
    out = u.copy()
    history = []
    res = math.inf
    it = 0
    while it < max_iter:
        res = op.sweep(u, out)
        u, out = out, u
        it += 1
        history.append(res)
        if res < tol:
            break
    status = "converged" if res < tol else "max_iter"
    if status != "converged":
        warnings.warn(f"value iteration stopped at max_iter={max_iter} with residual {res:.3e}",
                      RuntimeWarning, stacklevel=2)
    meta = {"config": cfg.describe(), "h": h, "iterations": it, "residual": res,
            "tol": tol, "status": status, "history": history, "moves": len(op.moves),
            "backend": _backend.NAME}
    return GridField(h, op.lo.copy(), u.reshape(op.shape), meta)


def zero_field(cfg, h):
    lo, shape = lattice(h, cfg.d)
    return GridField(float(h), lo, np.zeros(shape), {"config": cfg.describe()})
