"""Tug-of-war with noise on the unit ball.

At every step a fair coin picks the mover, who chooses ``v`` with
``|v| <= eps``; the position then moves by ``v + w`` with ``w`` uniform on
the sphere of radius ``R eps`` in ``v``-perp, ``R = sqrt((d-1)/(p-1))``.
Once the ball ``B(x, (R+1) eps)`` meets the unit sphere the game ends with
a final coin whose winner picks the payoff point in that cap.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .boundary import Boundary
from .geometry import GeometryError, perp2, sample_orthogonal_sphere, sample_sphere, unit
from .rng import stream

MOVE_TOL = 1e-12


class GameError(ValueError):
    pass


@dataclass
class GameConfig:
    """Parameters of one game.

    ``n_arc`` sets the cap quadrature resolution and ``n_max`` the step cap
    after which a rollout is declared non-terminating.
    """

    p: float
    d: int
    eps: float
    boundary: Boundary
    seed: int = 0
    n_arc: int = 64
    n_max: int = 10_000_000

    def __post_init__(self):
        if not self.p > 1:
            raise GameError("p must exceed 1")
        if int(self.d) != self.d or self.d < 2:
            raise GameError("dimension must be an integer >= 2")
        self.d = int(self.d)
        if not self.eps > 0:
            raise GameError("eps must be positive")
        if (self.R + 1.0) * self.eps >= 1.0:
            raise GameError("(R+1)*eps >= 1: the game has no interior")

    @property
    def R(self):
        return math.sqrt((self.d - 1) / (self.p - 1))

    @property
    def noise_radius(self):
        """Noise amplitude ``R eps``."""
        return self.R * self.eps

    @property
    def margin(self):
        """Terminal margin ``(R+1) eps``."""
        return (self.R + 1.0) * self.eps

    def describe(self):
        return {"p": self.p, "d": self.d, "eps": self.eps, "R": self.R,
                "boundary": self.boundary.describe(), "seed": self.seed, "n_arc": self.n_arc}


def is_terminal(x, cfg):
    """``|x| > 1 - (R+1) eps`` (vectorised over leading axes)."""
    return np.linalg.norm(np.asarray(x, dtype=float), axis=-1) > 1.0 - cfg.margin


def cap_half_angle(x_norm, r):
    """Angular radius of ``B(x, r) & S^{d-1}`` seen from the centre."""
    x_norm = np.asarray(x_norm, dtype=float)
    c = (1.0 + x_norm ** 2 - r ** 2) / (2.0 * np.maximum(x_norm, 1e-300))
    return np.arccos(np.clip(c, -1.0, 1.0))


def _frame(xh):
    # orthonormal basis of xh-perp, rows
    d = len(xh)
    q, _ = np.linalg.qr(np.column_stack([xh, np.eye(d)]))
    return q[:, 1:d].T * np.sign(q[:, 0] @ xh)


def cap_points(x, cfg, n_arc=None):
    """Quadrature points on the cap ``B(x, (R+1) eps) & S^{d-1}``.

    ``d = 2``: ``n_arc + 1`` equispaced angles including both arc ends and
    the centre.  ``d = 3``: the centre plus a polar-by-azimuth product grid.
    ``d >= 4``: the centre plus rings along the coordinate and diagonal
    directions of ``x``-perp.
    """
    x = np.asarray(x, dtype=float)
    n_arc = cfg.n_arc if n_arc is None else n_arc
    xn = float(np.linalg.norm(x))
    if xn == 0.0:
        raise GameError("cap undefined at the origin")
    alpha = float(cap_half_angle(xn, cfg.margin))
    xh = x / xn
    d = len(x)
    if d == 2:
        th = math.atan2(xh[1], xh[0]) + np.linspace(-alpha, alpha, n_arc + 1)
        return np.column_stack([np.cos(th), np.sin(th)])
    basis = _frame(xh)
    if d == 3:
        n_pol = max(2, n_arc // 4)
        n_az = max(4, n_arc // 2)
        pol = alpha * np.arange(1, n_pol + 1) / n_pol
        az = 2 * np.pi * np.arange(n_az) / n_az
        P, A = np.meshgrid(pol, az, indexing="ij")
        dirs = np.cos(A)[..., None] * basis[0] + np.sin(A)[..., None] * basis[1]
        pts = np.cos(P)[..., None] * xh + np.sin(P)[..., None] * dirs
        return np.vstack([xh[None], pts.reshape(-1, 3)])
    dirs = [b for b in basis] + [-b for b in basis]
    for i in range(d - 1):
        for j in range(i + 1, d - 1):
            for si in (1, -1):
                for sj in (1, -1):
                    dirs.append((si * basis[i] + sj * basis[j]) / math.sqrt(2))
    dirs = np.array(dirs)
    pts = [xh[None]]
    for t in alpha * np.arange(1, 5) / 4:
        pts.append(math.cos(t) * xh + math.sin(t) * dirs)
    return np.vstack(pts)


def terminal_arc_extremes(x, cfg, n_arc=None):
    """``(min, max)`` of the boundary data over the terminal cap at ``x``."""
    if not is_terminal(x, cfg):
        raise GameError("position is not terminal")
    vals = cfg.boundary(cap_points(x, cfg, n_arc))
    return float(np.min(vals)), float(np.max(vals))


# -- strategies ---------------------------------------------------------------

class Strategy:
    """Player strategy.

    ``move`` maps a batch of positions ``(n, d)`` to moves of norm at most
    ``eps``; ``choose_boundary`` picks the payoff point of a won final coin
    (``role`` is ``"max"`` for player I, ``"min"`` for player II).
    Built-in strategies are stateless.
    """

    name = "strategy"

    def move(self, x, cfg, rng):
        raise NotImplementedError

    def choose_boundary(self, x, cfg, role):
        pts = cap_points(x, cfg)
        vals = cfg.boundary(pts)
        i = int(np.argmax(vals)) if role == "max" else int(np.argmin(vals))
        return pts[i], float(vals[i])


class ZeroMove(Strategy):
    name = "zero"

    def move(self, x, cfg, rng):
        return np.zeros_like(np.asarray(x, dtype=float))


class PullToward(Strategy):
    """Step ``eps`` toward a fixed point (zero move once there)."""

    name = "pull_toward"

    def __init__(self, target):
        self.target = np.asarray(target, dtype=float)

    def move(self, x, cfg, rng):
        diff = self.target - np.asarray(x, dtype=float)
        n = np.linalg.norm(diff, axis=-1, keepdims=True)
        return np.where(n > 0, cfg.eps * diff / np.where(n > 0, n, 1.0), 0.0)


class PullDirection(Strategy):
    """Step ``eps`` along a fixed direction."""

    name = "pull_direction"

    def __init__(self, direction):
        self.direction = unit(direction)

    def move(self, x, cfg, rng):
        return np.broadcast_to(cfg.eps * self.direction, np.shape(x)).copy()


class RandomDirection(Strategy):
    name = "random_direction"

    def move(self, x, cfg, rng):
        x = np.asarray(x, dtype=float)
        return cfg.eps * sample_sphere(x.shape[:-1], x.shape[-1], rng)


# -- dynamics -----------------------------------------------------------------

@dataclass
class GameState:
    position: np.ndarray
    n: int = 0
    terminal: bool = False
    payoff: float | None = None


@dataclass
class Trace:
    positions: np.ndarray
    coins: np.ndarray
    payoff: float
    boundary_point: np.ndarray = field(default=None)

    @property
    def steps(self):
        return len(self.coins)


def noise(v, cfg, rng):
    """Noise increments for a batch of moves ``v`` of shape ``(n, d)``.

    Zero moves draw their noise orthogonal to a uniformly random direction.
    """
    v = np.atleast_2d(np.asarray(v, dtype=float))
    ref = v.copy()
    zero = np.linalg.norm(v, axis=-1) == 0.0
    if np.any(zero):
        ref[zero] = sample_sphere(int(zero.sum()), v.shape[-1], rng)
    return sample_orthogonal_sphere(ref, cfg.R * cfg.eps, rng)


def _check_moves(v, cfg):
    if np.any(np.linalg.norm(v, axis=-1) > cfg.eps * (1.0 + MOVE_TOL)):
        raise GameError("illegal move")


def step(state, move, cfg, rng):
    """Apply one move plus noise to a non-terminal state."""
    if state.terminal:
        raise GameError("state is terminal")
    v = np.asarray(move, dtype=float)
    _check_moves(v[None], cfg)
    w = noise(v[None], cfg, rng)[0]
    x = np.asarray(state.position, dtype=float) + v + w
    return GameState(x, state.n + 1, bool(is_terminal(x, cfg)), None)


def run_game(s_one, s_two, x0, cfg, rng):
    """Play one game to termination and return its trace."""
    x = np.asarray(x0, dtype=float)
    if is_terminal(x, cfg):
        raise GameError("start must lie inside the terminal margin")
    positions = [x.copy()]
    coins = []
    state = GameState(x)
    while not state.terminal:
        if state.n >= cfg.n_max:
            raise GameError("non-termination suspected")
        heads = bool(rng.random() < 0.5)
        mover = s_one if heads else s_two
        v = mover.move(state.position[None], cfg, rng)[0]
        state = step(state, v, cfg, rng)
        positions.append(state.position.copy())
        coins.append(1 if heads else 0)
    heads = bool(rng.random() < 0.5)
    winner, role = (s_one, "max") if heads else (s_two, "min")
    pt, val = winner.choose_boundary(state.position, cfg, role)
    coins.append(1 if heads else 0)
    return Trace(np.array(positions), np.array(coins, dtype=np.int8), val, pt)


def play_batch(s_one, s_two, x0, cfg, n_games, rng):
    """Vectorised rollouts; returns ``(payoffs, steps)``.

    All games share one generator and advance in lockstep; finished games
    drop out of the active set.
    """
    d = cfg.d
    x = np.tile(np.asarray(x0, dtype=float), (n_games, 1))
    payoff = np.empty(n_games)
    steps = np.zeros(n_games, dtype=np.int64)
    active = np.arange(n_games)
    while len(active):
        if steps[active[0]] >= cfg.n_max:
            raise GameError("non-termination suspected")
        xa = x[active]
        term = is_terminal(xa, cfg)
        if np.any(term):
            idx = active[term]
            heads = rng.random(len(idx)) < 0.5
            for j, h in zip(idx, heads):
                strat, role = (s_one, "max") if h else (s_two, "min")
                payoff[j] = strat.choose_boundary(x[j], cfg, role)[1]
            active = active[~term]
            xa = xa[~term]
            if not len(active):
                break
        heads = rng.random(len(active)) < 0.5
        v = np.empty((len(active), d))
        if np.any(heads):
            v[heads] = s_one.move(xa[heads], cfg, rng)
        if np.any(~heads):
            v[~heads] = s_two.move(xa[~heads], cfg, rng)
        _check_moves(v, cfg)
        x[active] = xa + v + noise(v, cfg, rng)
        steps[active] += 1
    return payoff, steps


CHUNK = 1024


def _batch_chunk(args):
    s_one, s_two, x0, cfg, seed, chunk, n = args
    return play_batch(s_one, s_two, x0, cfg, n, stream(seed, 1, chunk))


def run_games(s_one, s_two, x0, cfg, n_games, seed=None, workers=1):
    """Many independent games, reproducible for any worker count.

    Games are grouped in fixed chunks of ``CHUNK``; chunk ``c`` draws from
    the stream keyed by ``(seed, c)``.
    """
    from .parallel import map_ordered

    seed = cfg.seed if seed is None else seed
    sizes = [min(CHUNK, n_games - c) for c in range(0, n_games, CHUNK)]
    tasks = [(s_one, s_two, x0, cfg, seed, i, n) for i, n in enumerate(sizes)]
    parts = map_ordered(_batch_chunk, tasks, workers)
    if not parts:
        return np.empty(0), np.empty(0, dtype=np.int64)
    return np.concatenate([p[0] for p in parts]), np.concatenate([p[1] for p in parts])
