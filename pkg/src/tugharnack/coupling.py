"""Coupled games started from two points.

Player I's strategy in the game from ``x`` proposes ``U``; player II's
strategy in the game from ``y`` proposes ``V``.  Each is answered by a
counter-strategy built from ``Z = X - Y``:

* in the ``x`` game player II plays ``-U`` when ``U`` is within
  ``theta0`` of ``Z_hat`` and ``-eps Z_hat`` otherwise;
* in the ``y`` game player I plays ``-V`` when ``V`` is within
  ``theta0`` of ``-Z_hat`` and ``+eps Z_hat`` otherwise.

When both proposals are aligned, one coin drives both games and the noise
of the ``y`` game is the noise ``B`` of the ``x`` game carried over by
``S' S^{-1}``, where ``S`` and ``S'`` are the plane rotations taking the
line of ``Z`` to the lines of ``U`` and ``V``.  Otherwise coins and noises
are independent.  The Lyapunov functional ``M = |X|^2 + |Y|^2 +
C |Z|^{2 beta}`` should then be a supermartingale until ``|Z| < eta`` or
one process leaves the unit ball.

Besides the realised path, every step records the conditional expectation
of the increments of ``|Z|^{2 beta}`` and ``M`` given the current state and
the sampled noise directions, averaged exactly over the coin outcomes and
over the antithetic noise sign.  These averages are unbiased for the
conditional drift and far less noisy than the realised increments.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .game import GameConfig
from .geometry import (GeometryError, plane_rotation_span_to_span, sample_orthogonal_sphere,
                       sample_sphere)
from .parallel import map_ordered
from .rng import stream


class CouplingError(ValueError):
    pass


@dataclass
class CouplingParams:
    """Alignment threshold, Lyapunov exponent/weight and merge radius.

    ``C_lyap`` defaults to ``6000 (R^2 + 1)`` once bound to a game config
    (see :meth:`resolve`); ``eta`` defaults to ``2 eps``.
    """

    theta0: float = 0.05
    beta: float = 0.1
    eta: float | None = None
    C_lyap: float | None = None

    def __post_init__(self):
        if not 0 < self.theta0 < 0.1:
            raise CouplingError("theta0 must lie in (0, 1/10)")
        if not 0 < self.beta < 0.5:
            raise CouplingError("beta must lie in (0, 1/2)")
        if self.eta is not None and not self.eta > 0:
            raise CouplingError("eta must be positive")

    def resolve(self, cfg):
        eta = 2.0 * cfg.eps if self.eta is None else self.eta
        C = 6000.0 * (cfg.R ** 2 + 1.0) if self.C_lyap is None else self.C_lyap
        return CouplingParams(self.theta0, self.beta, eta, C)


def _unit_rows(v):
    v = np.asarray(v, dtype=float)
    n = np.linalg.norm(v, axis=-1, keepdims=True)
    return v / np.where(n > 0, n, 1.0), n[..., 0]


def _cos_to(a, zh):
    ah, n = _unit_rows(a)
    c = np.sum(ah * zh, axis=-1)
    return np.where(n > 0, c, -np.inf)


def _zhat(Z):
    zh, n = _unit_rows(Z)
    if np.any(n == 0):
        raise CouplingError("processes already merged")
    return zh


def counter_move_II(U, Z, params, eps):
    """Player II's answer to ``U`` in the game started from ``x``."""
    U = np.asarray(U, dtype=float)
    zh = _zhat(Z)
    if np.any(np.linalg.norm(U, axis=-1) > eps * (1 + 1e-12)):
        raise CouplingError("illegal move")
    keep = _cos_to(U, zh) > math.cos(params.theta0)
    return np.where(keep[..., None], -U, -eps * zh)


def counter_move_I(V, Z, params, eps):
    """Player I's answer to ``V`` in the game started from ``y``."""
    V = np.asarray(V, dtype=float)
    zh = _zhat(Z)
    if np.any(np.linalg.norm(V, axis=-1) > eps * (1 + 1e-12)):
        raise CouplingError("illegal move")
    keep = _cos_to(V, -zh) > math.cos(params.theta0)
    return np.where(keep[..., None], -V, eps * zh)


def is_aligned(U, V, Z, theta0):
    """Both proposals within ``theta0`` of ``Z_hat`` (resp. ``-Z_hat``)."""
    U = np.asarray(U, dtype=float)
    V = np.asarray(V, dtype=float)
    if np.any(np.linalg.norm(U, axis=-1) == 0) or np.any(np.linalg.norm(V, axis=-1) == 0):
        raise CouplingError("zero move")
    zh = _zhat(Z)
    c = math.cos(theta0)
    return (_cos_to(U, zh) > c) & (_cos_to(V, -zh) > c)


def coupling_rotations(U, V, Z):
    """``(S, S')`` taking the line of ``Z`` to the lines of ``U`` and ``V``."""
    return plane_rotation_span_to_span(Z, U), plane_rotation_span_to_span(Z, V)


def rotation_angles(S, Sp):
    """``(theta1, theta2, psi)``: rotation angles and the angle between the
    two rotation planes' directions orthogonal to ``Z``."""
    c = np.clip(np.abs(np.sum(S.f * Sp.f, axis=-1)), 0.0, 1.0)
    psi = np.where((np.asarray(S.theta) == 0) | (np.asarray(Sp.theta) == 0), 0.0, np.arccos(c))
    return np.asarray(S.theta), np.asarray(Sp.theta), psi


def coupled_noise_pair(U, V, Z, cfg, rng, params=None):
    """Noise ``B`` of the ``x`` game and its image ``B' = S' S^{-1} B``.

    Raises
    ------
    CouplingError
        If the proposals are not aligned.
    """
    params = CouplingParams() if params is None else params
    if not np.all(is_aligned(U, V, Z, params.theta0)):
        raise CouplingError("noise coupling requires aligned proposals")
    S, Sp = coupling_rotations(U, V, Z)
    B = sample_orthogonal_sphere(U, cfg.R * cfg.eps, rng)
    return B, Sp.apply(S.apply_inverse(B))


def lyapunov(X, Y, Z, params):
    """``|X|^2 + |Y|^2 + C |Z|^{2 beta}``."""
    X = np.asarray(X, dtype=float)
    Y = np.asarray(Y, dtype=float)
    Z = np.asarray(Z, dtype=float)
    return (np.sum(X * X, axis=-1) + np.sum(Y * Y, axis=-1)
            + params.C_lyap * np.linalg.norm(Z, axis=-1) ** (2 * params.beta))


# -- adversaries --------------------------------------------------------------

class Adversary:
    """Supplies the proposals ``U`` (player I, ``x`` game) and ``V`` (player
    II, ``y`` game) for a batch of coupled states."""

    name = "adversary"

    def proposals(self, X, Y, cfg, rng):
        raise NotImplementedError


def _safe_dir(v, rng):
    vh, n = _unit_rows(v)
    bad = n == 0
    if np.any(bad):
        vh[bad] = sample_sphere(int(bad.sum()), v.shape[-1], rng)
    return vh


class PullOut(Adversary):
    """Both players push their process radially outward."""

    name = "pull_out"

    def proposals(self, X, Y, cfg, rng):
        return cfg.eps * _safe_dir(X, rng), cfg.eps * _safe_dir(Y, rng)


class PullRandom(Adversary):
    """Independent uniformly random directions."""

    name = "pull_random"

    def proposals(self, X, Y, cfg, rng):
        n, d = X.shape
        return cfg.eps * sample_sphere(n, d, rng), cfg.eps * sample_sphere(n, d, rng)


class AdversarialSpread(Adversary):
    """Proposals just inside the alignment cone, tilted in random directions.

    ``U`` is ``Z_hat`` tilted by an angle uniform in ``[0, 0.9 theta0]``
    and ``V`` likewise around ``-Z_hat``, so every step is aligned while the
    noise rotations are as large as the cone allows.
    """

    name = "adversarial_spread"

    def __init__(self, theta0=0.05, spread=0.9):
        self.theta0 = theta0
        self.spread = spread

    def _tilt(self, axis, rng):
        n, d = axis.shape
        ang = self.spread * self.theta0 * rng.random(n)
        perp = sample_orthogonal_sphere(axis, 1.0, rng)
        return np.cos(ang)[:, None] * axis + np.sin(ang)[:, None] * perp

    def proposals(self, X, Y, cfg, rng):
        zh = _safe_dir(X - Y, rng)
        return cfg.eps * self._tilt(zh, rng), cfg.eps * self._tilt(-zh, rng)


class FromStrategies(Adversary):
    """Wraps game strategies: ``U = s_one.move(X)``, ``V = s_two.move(Y)``."""

    def __init__(self, s_one, s_two):
        self.s_one = s_one
        self.s_two = s_two
        self.name = f"{s_one.name}/{s_two.name}"

    def proposals(self, X, Y, cfg, rng):
        return self.s_one.move(X, cfg, rng), self.s_two.move(Y, cfg, rng)


def battery(theta0=0.05):
    return [PullOut(), PullRandom(), AdversarialSpread(theta0)]


# -- dynamics -----------------------------------------------------------------

@dataclass
class CoupledState:
    X: np.ndarray
    Y: np.ndarray
    n: int = 0
    stopped: bool = False
    reason: str | None = None
    M: float = float("nan")

    @property
    def Z(self):
        return self.X - self.Y


@dataclass
class CoupledTrace:
    """Path of a coupled run plus per-step diagnostics.

    Per-step arrays have one entry per transition: ``aligned``, ``coin``
    (aligned: 1 heads / 0 tails; unaligned: ``2 * coin_x + coin_y``),
    ``theta1``, ``theta2``, ``psi`` (NaN when unaligned), realised
    increment ``D`` of ``Z``, and the coin-and-sign averaged increments
    ``dzb`` (of ``|Z|^{2 beta}``) and ``dm`` (of ``M``).
    """

    X: np.ndarray
    Y: np.ndarray
    M: np.ndarray
    aligned: np.ndarray
    coin: np.ndarray
    theta1: np.ndarray
    theta2: np.ndarray
    psi: np.ndarray
    D: np.ndarray
    dzb: np.ndarray
    dm: np.ndarray
    reason: str | None
    status: str = "ok"

    @property
    def Znorm(self):
        return np.linalg.norm(self.X - self.Y, axis=-1)

    @property
    def steps(self):
        return len(self.aligned)


def _zb(X, Y, params):
    return np.linalg.norm(X - Y, axis=-1) ** (2 * params.beta)


def _noise_for(move, cfg, rng):
    # noise orthogonal to the played move (random reference for zero moves)
    ref = move.copy()
    zero = np.linalg.norm(move, axis=-1) == 0
    if np.any(zero):
        ref[zero] = sample_sphere(int(zero.sum()), move.shape[-1], rng)
    return sample_orthogonal_sphere(ref, cfg.R * cfg.eps, rng)


def coupled_transition(X, Y, U, V, cfg, params, rng):
    """One coupled step for a batch of states.

    Returns a dict with the new positions, flags, angles, realised ``D``
    and the averaged increments ``dzb`` and ``dm``.
    """
    n, d = X.shape
    Z = X - Y
    zb0 = _zb(X, Y, params)
    m0 = lyapunov(X, Y, Z, params)
    aligned = is_aligned(U, V, Z, params.theta0)
    Xn = np.empty_like(X)
    Yn = np.empty_like(Y)
    dzb = np.empty(n)
    dm = np.empty(n)
    coin = np.zeros(n, dtype=np.int8)
    th1 = np.full(n, np.nan)
    th2 = np.full(n, np.nan)
    psi = np.full(n, np.nan)

    a = np.flatnonzero(aligned)
    if len(a):
        Xa, Ya, Ua, Va = X[a], Y[a], U[a], V[a]
        S, Sp = coupling_rotations(Ua, Va, Z[a])
        B = sample_orthogonal_sphere(Ua, cfg.R * cfg.eps, rng)
        Bp = Sp.apply(S.apply_inverse(B))
        t1, t2, ps = rotation_angles(S, Sp)
        th1[a], th2[a], psi[a] = t1, t2, ps
        acc_z = np.zeros(len(a))
        acc_m = np.zeros(len(a))
        for c in (1.0, -1.0):
            for s in (1.0, -1.0):
                xn = Xa + c * Ua + s * B
                yn = Ya + c * Va + s * Bp
                acc_z += _zb(xn, yn, params)
                acc_m += lyapunov(xn, yn, xn - yn, params)
        dzb[a] = acc_z / 4 - zb0[a]
        dm[a] = acc_m / 4 - m0[a]
        heads = rng.random(len(a)) < 0.5
        c = np.where(heads, 1.0, -1.0)[:, None]
        Xn[a] = Xa + c * Ua + B
        Yn[a] = Ya + c * Va + Bp
        coin[a] = heads

    u = np.flatnonzero(~aligned)
    if len(u):
        Xu, Yu, Uu, Vu, Zu = X[u], Y[u], U[u], V[u], Z[u]
        xm = [Uu, counter_move_II(Uu, Zu, params, cfg.eps)]
        ym = [Vu, counter_move_I(Vu, Zu, params, cfg.eps)]
        xw = [_noise_for(m, cfg, rng) for m in xm]
        yw = [_noise_for(m, cfg, rng) for m in ym]
        acc_z = np.zeros(len(u))
        acc_m = np.zeros(len(u))
        for i in range(2):
            for j in range(2):
                for s in (1.0, -1.0):
                    for t in (1.0, -1.0):
                        xn = Xu + xm[i] + s * xw[i]
                        yn = Yu + ym[j] + t * yw[j]
                        acc_z += _zb(xn, yn, params)
                        acc_m += lyapunov(xn, yn, xn - yn, params)
        dzb[u] = acc_z / 16 - zb0[u]
        dm[u] = acc_m / 16 - m0[u]
        cx = rng.random(len(u)) < 0.5
        cy = rng.random(len(u)) < 0.5
        Xn[u] = Xu + np.where(cx[:, None], xm[0] + xw[0], xm[1] + xw[1])
        Yn[u] = Yu + np.where(cy[:, None], ym[0] + yw[0], ym[1] + yw[1])
        coin[u] = 2 * cx + cy
    D = (Xn - Yn) - Z
    bound = 2 * cfg.eps + 2 * cfg.R * cfg.eps
    if np.any(np.linalg.norm(D, axis=-1) > bound * (1 + 1e-12)):
        raise CouplingError("increment bound violated")  # pragma: no cover
    return {"X": Xn, "Y": Yn, "aligned": aligned, "coin": coin, "theta1": th1,
            "theta2": th2, "psi": psi, "D": D, "dzb": dzb, "dm": dm}


def stop_reason(X, Y, params):
    """Vectorised stopping rule; ``""`` where the run continues."""
    zn = np.linalg.norm(X - Y, axis=-1)
    out = np.full(len(X), "", dtype=object)
    out[np.linalg.norm(Y, axis=-1) > 1] = "Y_escaped"
    out[np.linalg.norm(X, axis=-1) > 1] = "X_escaped"
    out[zn < params.eta] = "merged"
    return out


def coupled_step(state, adversary, cfg, params, rng):
    """Advance a single :class:`CoupledState` by one step."""
    params = params if params.C_lyap is not None and params.eta is not None else params.resolve(cfg)
    if state.stopped:
        raise CouplingError("state already stopped")
    X = np.asarray(state.X, dtype=float)[None]
    Y = np.asarray(state.Y, dtype=float)[None]
    U, V = adversary.proposals(X, Y, cfg, rng)
    out = coupled_transition(X, Y, U, V, cfg, params, rng)
    Xn, Yn = out["X"][0], out["Y"][0]
    reason = stop_reason(out["X"], out["Y"], params)[0] or None
    return CoupledState(Xn, Yn, state.n + 1, reason is not None, reason,
                        float(lyapunov(Xn, Yn, Xn - Yn, params)))


def run_coupled_batch(x0, y0, cfg, params, adversary, rng, n_max=100_000):
    """Run many coupled pairs in lockstep; returns one trace per pair."""
    params = params.resolve(cfg)
    X = np.array(x0, dtype=float, ndmin=2)
    Y = np.array(y0, dtype=float, ndmin=2)
    n_pairs, d = X.shape
    if d != cfg.d:
        raise CouplingError("dimension mismatch")
    limit = 1.0 - cfg.margin
    if np.any(np.linalg.norm(X, axis=1) > limit) or np.any(np.linalg.norm(Y, axis=1) > limit):
        raise CouplingError("starting points must lie inside the terminal margin")
    keys = ("aligned", "coin", "theta1", "theta2", "psi", "D", "dzb", "dm")
    log = {k: [] for k in keys + ("X", "Y", "chain")}
    reasons = list(stop_reason(X, Y, params))
    active = np.array([r == "" for r in reasons])
    n = 0
    while np.any(active) and n < n_max:
        idx = np.flatnonzero(active)
        U, V = adversary.proposals(X[idx], Y[idx], cfg, rng)
        out = coupled_transition(X[idx], Y[idx], U, V, cfg, params, rng)
        X[idx] = out["X"]
        Y[idx] = out["Y"]
        for k in keys + ("X", "Y"):
            log[k].append(out[k])
        log["chain"].append(idx)
        rs = stop_reason(out["X"], out["Y"], params)
        for j in np.flatnonzero(rs != ""):
            reasons[idx[j]] = rs[j]
            active[idx[j]] = False
        n += 1
    x0 = np.array(x0, dtype=float, ndmin=2)
    y0 = np.array(y0, dtype=float, ndmin=2)
    if log["chain"]:
        chain = np.concatenate(log["chain"])
        order = np.argsort(chain, kind="stable")
        cols = {k: np.concatenate(log[k])[order] for k in keys + ("X", "Y")}
        bounds = np.searchsorted(chain[order], np.arange(n_pairs + 1))
    else:
        cols = {k: np.empty((0, d)) if k in ("D", "X", "Y") else np.empty(0) for k in keys + ("X", "Y")}
        bounds = np.zeros(n_pairs + 1, dtype=int)
    traces = []
    for i in range(n_pairs):
        sl = slice(bounds[i], bounds[i + 1])
        px = np.vstack([x0[i], cols["X"][sl]])
        py = np.vstack([y0[i], cols["Y"][sl]])
        traces.append(CoupledTrace(
            X=px, Y=py, M=lyapunov(px, py, px - py, params),
            aligned=cols["aligned"][sl].astype(bool), coin=cols["coin"][sl].astype(np.int8),
            theta1=cols["theta1"][sl], theta2=cols["theta2"][sl], psi=cols["psi"][sl],
            D=cols["D"][sl].reshape(-1, d), dzb=cols["dzb"][sl], dm=cols["dm"][sl],
            reason=reasons[i] or None, status="ok" if reasons[i] else "step_cap"))
    return traces


def run_coupled(x, y, cfg, params, adversary, rng, n_max=100_000):
    """Run one coupled pair until ``tau`` or ``n_max`` steps."""
    return run_coupled_batch(np.asarray(x)[None], np.asarray(y)[None], cfg, params,
                             adversary, rng, n_max)[0]


# -- verification -------------------------------------------------------------

def _mean_se(x):
    x = np.asarray(x, dtype=float)
    if len(x) < 2:
        return float(x.mean()) if len(x) else float("nan"), float("inf")
    return float(x.mean()), float(x.std(ddof=1) / math.sqrt(len(x)))


def one_sided(name, values, threshold, z=3.0, min_n=1000):
    """``mean <= threshold + z * SE``; INDETERMINATE below ``min_n`` samples
    or when the interval straddles the threshold by more than the gap."""
    if len(values) == 0:
        return {"name": name, "n": 0, "verdict": "SKIPPED", "notice": "empty stratum"}
    m, se = _mean_se(values)
    ok = m <= threshold + z * se
    verdict = "PASS" if ok else "FAIL"
    if len(values) < min_n:
        verdict = "INDETERMINATE"
    return {"name": name, "n": int(len(values)), "mean": m, "se": se, "ci": z * se,
            "threshold": threshold, "verdict": verdict}


def _collect(traces, key, mask=None):
    parts = []
    for t in traces:
        v = getattr(t, key)
        if mask is not None:
            v = v[mask(t)]
        parts.append(v)
    if not parts:
        return np.empty(0)
    return np.concatenate(parts)


def verify_decrements(traces, params, eps, z=3.0, min_n=1000):
    """Stratified drift checks on coupled traces.

    * aligned steps: mean increment of ``|Z|^{2 beta}`` at most ``-eps^2/40``;
    * unaligned steps: at most ``-eps/1000``;
    * all steps: mean increment of ``M`` at most ``0``.

    Each uses the coin-averaged increments, a one-sided ``z``-sigma margin
    and needs ``min_n`` steps for a definite verdict.
    """
    al = _collect(traces, "dzb", lambda t: t.aligned)
    un = _collect(traces, "dzb", lambda t: ~t.aligned)
    dm_a = _collect(traces, "dm", lambda t: t.aligned)
    dm_u = _collect(traces, "dm", lambda t: ~t.aligned)
    checks = [one_sided("aligned_dZbeta", al, -eps ** 2 / 40, z, min_n),
              one_sided("unaligned_dZbeta", un, -eps / 1000, z, min_n),
              one_sided("aligned_dM", dm_a, 0.0, z, min_n),
              one_sided("unaligned_dM", dm_u, 0.0, z, min_n),
              one_sided("all_dM", np.concatenate([dm_a, dm_u]), 0.0, z, min_n)]
    return {"checks": checks, "verdict": combine([c["verdict"] for c in checks])}


def verify_unbiased(traces, z=4.0, min_n=1000):
    """Aligned steps: realised ``D`` has mean zero (``Z_hat . D`` and each
    coordinate) within ``z`` standard errors."""
    rows = []
    zd = []
    for t in traces:
        if not t.steps:
            continue
        zn = t.X[:-1] - t.Y[:-1]
        zh = zn / np.linalg.norm(zn, axis=1, keepdims=True)
        zd.append(np.sum(zh * t.D, axis=1)[t.aligned])
    D = _collect(traces, "D", lambda t: t.aligned)
    zd = np.concatenate(zd) if zd else np.empty(0)
    if len(zd) == 0:
        return {"verdict": "SKIPPED", "n": 0, "checks": []}
    series = [("zhat_dot_D", zd)] + [(f"D_{k}", D[:, k]) for k in range(D.shape[1])]
    for name, v in series:
        m, se = _mean_se(v)
        ok = abs(m) <= z * se
        verdict = "PASS" if ok else "FAIL"
        if len(v) < min_n:
            verdict = "INDETERMINATE"
        rows.append({"name": name, "n": int(len(v)), "mean": m, "se": se, "ci": z * se,
                     "verdict": verdict})
    return {"n": int(len(zd)), "checks": rows, "verdict": combine([r["verdict"] for r in rows])}


def combine(verdicts):
    vs = [v for v in verdicts if v != "SKIPPED"]
    if any(v == "FAIL" for v in vs):
        return "FAIL"
    if not vs or any(v == "INDETERMINATE" for v in vs):
        return "INDETERMINATE"
    return "PASS"


def alignment_ratio_exact(U, V, Z):
    """Closed-form ``E[((B'-B).Z_hat)^2] / E[|B'-B|^2]`` for one configuration.

    With ``b = S^{-1} B`` uniform on a sphere in ``Z``-perp, ``B' - B =
    (S' - S) b``, so both expectations are proportional to quadratic forms
    of ``(S' - S)`` restricted to ``Z``-perp.  Returns ``(num, den)`` per
    unit noise variance; ``den = 0`` when the two rotations coincide.
    """
    Z = np.asarray(Z, dtype=float)
    d = len(Z)
    zh = Z / np.linalg.norm(Z)
    S, Sp = coupling_rotations(U, V, Z)
    P = np.eye(d) - np.outer(zh, zh)
    Dm = (Sp.matrix() - S.matrix()) @ P
    num = float(np.sum((zh @ Dm) ** 2))
    den = float(np.sum(Dm * Dm))
    return num, den


def verify_alignment_inequality(U, V, Z, cfg, samples, rng, params=None):
    """Monte Carlo check of ``E[((B'-B).Z_hat)^2] >= 3/4 E[|B'-B|^2]``.

    PASS when the estimated ratio is at least ``3/4`` minus three
    delta-method standard errors; identical noises (``B' = B``) pass by
    convention.
    """
    params = CouplingParams() if params is None else params
    U = np.asarray(U, dtype=float)
    V = np.asarray(V, dtype=float)
    Z = np.asarray(Z, dtype=float)
    if len(Z) < 3:
        raise CouplingError("the alignment inequality needs d >= 3")
    Ub = np.broadcast_to(U, (samples, len(Z)))
    Vb = np.broadcast_to(V, (samples, len(Z)))
    Zb = np.broadcast_to(Z, (samples, len(Z)))
    B, Bp = coupled_noise_pair(Ub, Vb, Zb, cfg, rng, params)
    diff = Bp - B
    zh = Z / np.linalg.norm(Z)
    a = (diff @ zh) ** 2
    b = np.sum(diff * diff, axis=1)
    S, Sp = coupling_rotations(U, V, Z)
    t1, t2, ps = rotation_angles(S, Sp)
    out = {"theta1": float(t1), "theta2": float(t2), "psi": float(ps), "samples": int(samples),
           "E_normal_sq": float(a.mean()), "E_total_sq": float(b.mean())}
    scale = (cfg.R * cfg.eps) ** 2
    if b.mean() <= 1e-24 * scale:
        out.update(ratio=float("nan"), ci=0.0, verdict="PASS", notice="identical noises")
        return out
    ma, mb = a.mean(), b.mean()
    r = ma / mb
    # delta method for a ratio of means
    va = a.var(ddof=1)
    vb = b.var(ddof=1)
    cab = np.cov(a, b)[0, 1]
    se = math.sqrt(max(va - 2 * r * cab + r * r * vb, 0.0) / samples) / mb
    out.update(ratio=float(r), se=float(se), ci=float(3 * se),
               verdict="PASS" if r >= 0.75 - 3 * se else "FAIL")
    return out


def random_aligned_configuration(d, theta0, rng, eps=1.0, spread=0.999):
    """Random ``(U, V, Z)`` with both proposals strictly inside the cone."""
    Z = rng.standard_normal(d)
    zh = Z / np.linalg.norm(Z)
    def tilt(axis):
        ang = spread * theta0 * rng.random()
        perp = sample_orthogonal_sphere(axis, 1.0, rng)
        return eps * (math.cos(ang) * axis + math.sin(ang) * perp)
    return tilt(zh), tilt(-zh), Z


def escape_bound(params, delta):
    """``min(1, (C + 2) delta^{2 beta})``."""
    return min(1.0, (params.C_lyap + 2.0) * delta ** (2 * params.beta))


# -- batteries ------------------------------------------------------------------

PAIR_CHUNK = 50


def _battery_chunk(args):
    cfg, params, adversary, seed, a_idx, chunk, n_pairs, spread, n_max = args
    rng = stream(seed, 0xC0, a_idx, chunk)
    x0 = rng.uniform(-spread, spread, (n_pairs, cfg.d))
    y0 = rng.uniform(-spread, spread, (n_pairs, cfg.d))
    return run_coupled_batch(x0, y0, cfg, params, adversary, rng, n_max)


def run_battery(cfg, params, pairs, seed=0, workers=1, adversaries=None, spread=0.3,
                n_max=100_000):
    """Coupled runs for each adversary from uniform starts in ``[-spread, spread]^d``.

    Pairs are split into fixed chunks with their own streams, so the traces
    do not depend on ``workers``.  Returns ``{adversary name: traces}``.
    """
    adversaries = battery(params.theta0) if adversaries is None else adversaries
    tasks = []
    for a_idx, adv in enumerate(adversaries):
        for chunk, s in enumerate(range(0, pairs, PAIR_CHUNK)):
            tasks.append((cfg, params, adv, seed, a_idx, chunk, min(PAIR_CHUNK, pairs - s),
                          spread, n_max))
    parts = map_ordered(_battery_chunk, tasks, workers)
    out = {adv.name: [] for adv in adversaries}
    for t, traces in zip(tasks, parts):
        out[t[2].name].extend(traces)
    return out
