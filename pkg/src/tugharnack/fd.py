"""Reference p-Laplace solver on a disc (or annulus) in the plane.

Minimises the discrete p-Dirichlet energy of continuous piecewise-linear
functions on a criss-cross triangulation of the square lattice: every cell
contributes the average of its two diagonal splittings, i.e. four
triangle gradients each weighted ``h^2 / 4``.  Lattice nodes outside the
open domain carry Dirichlet values from the boundary data's extension.
The energy is convex and is minimised by damped Newton with Armijo
backtracking, started from the ``p = 2`` solution.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .boundary import Boundary
from .dpp import FieldError, GridField, evaluate, lattice


class FdError(RuntimeError):
    pass


@dataclass
class FdProblem:
    """Dirichlet problem for the p-Laplacian on ``B_radius`` minus ``B_hole``.

    Boundary data on the outer circle are read from ``boundary`` at the
    projected point ``x / radius``; ``hole_boundary`` (if any) gives the
    data on the inner circle.  ``delta_reg`` regularises ``|grad u|^2``.
    """

    p: float
    h: float
    boundary: Boundary
    radius: float = 1.0
    delta_reg: float = 1e-12
    hole_radius: float = 0.0
    hole_boundary: Boundary | None = None

    def __post_init__(self):
        if not self.p > 1:
            raise FdError("p must exceed 1")
        if not self.h > 0:
            raise FdError("h must be positive")
        if self.delta_reg < 0:
            raise FdError("delta_reg must be nonnegative")
        if self.hole_radius and self.hole_boundary is None:
            raise FdError("an annulus needs inner boundary data")


class PEnergy:
    """Discrete energy, gradient and Hessian in the free unknowns."""

    def __init__(self, problem):
        self.problem = problem
        h = problem.h
        self.lo, self.shape = lattice(h, 2, problem.radius, skirt=1)
        nx, ny = self.shape
        xs = self.lo[0] + h * np.arange(nx)
        ys = self.lo[1] + h * np.arange(ny)
        X, Y = np.meshgrid(xs, ys, indexing="ij")
        self.x = np.column_stack([X.ravel(), Y.ravel()])
        r = np.linalg.norm(self.x, axis=1)
        free = r < problem.radius * (1 - 1e-12)
        if problem.hole_radius:
            free &= r > problem.hole_radius * (1 + 1e-12)
        self.free = np.flatnonzero(free)
        self.fixed = np.flatnonzero(~free)
        g = np.empty(len(self.x))
        outer = r >= problem.radius * (1 - 1e-12)
        g[outer] = problem.boundary.extension(self.x[outer] / problem.radius)
        inner = ~free & ~outer
        if np.any(inner):
            g[inner] = problem.hole_boundary.extension(self.x[inner] / problem.hole_radius)
        # p-harmonicity is invariant under u -> a u + b: work with data in [0, 1]
        gfix = g[~free]
        self.shift = float(gfix.min())
        self.scale = float(gfix.max() - gfix.min()) or 1.0
        self.dirichlet = (g - self.shift) / self.scale

        # cells touching at least one free node
        idx = np.arange(nx * ny).reshape(nx, ny)
        n00, n10 = idx[:-1, :-1].ravel(), idx[1:, :-1].ravel()
        n01, n11 = idx[:-1, 1:].ravel(), idx[1:, 1:].ravel()
        keep = free[n00] | free[n10] | free[n01] | free[n11]
        n00, n10, n01, n11 = n00[keep], n10[keep], n01[keep], n11[keep]
        # four triangle gradients per cell (x-difference pair, y-difference pair)
        pairs = [((n10, n00), (n01, n00)), ((n10, n00), (n11, n10)),
                 ((n11, n01), (n01, n00)), ((n11, n01), (n11, n10))]
        rows_x, cols_x, vals_x, rows_y, cols_y, vals_y = [], [], [], [], [], []
        nt = len(n00)
        for t, ((xa, xb), (ya, yb)) in enumerate(pairs):
            row = t * nt + np.arange(nt)
            rows_x += [row, row]
            cols_x += [xa, xb]
            vals_x += [np.full(nt, 1.0 / h), np.full(nt, -1.0 / h)]
            rows_y += [row, row]
            cols_y += [ya, yb]
            vals_y += [np.full(nt, 1.0 / h), np.full(nt, -1.0 / h)]
        n_tri = 4 * nt
        n = nx * ny
        Gx = sp.csr_matrix((np.concatenate(vals_x), (np.concatenate(rows_x), np.concatenate(cols_x))),
                           shape=(n_tri, n))
        Gy = sp.csr_matrix((np.concatenate(vals_y), (np.concatenate(rows_y), np.concatenate(cols_y))),
                           shape=(n_tri, n))
        self.Gx_f = Gx[:, self.free].tocsr()
        self.Gy_f = Gy[:, self.free].tocsr()
        ud = np.zeros(n)
        ud[self.fixed] = self.dirichlet[self.fixed]
        self.gx0 = Gx @ ud
        self.gy0 = Gy @ ud
        self.area = h * h / 4.0

    def full(self, uf):
        """Nodal values in the original data units."""
        u = self.dirichlet.copy()
        u[self.free] = uf
        return self.shift + self.scale * u

    def grads(self, uf):
        return self.Gx_f @ uf + self.gx0, self.Gy_f @ uf + self.gy0

    def energy(self, uf, p):
        gx, gy = self.grads(uf)
        s = gx * gx + gy * gy + self.problem.delta_reg
        return float(self.area * np.sum(s ** (p / 2)) / p)

    def gradient(self, uf, p):
        gx, gy = self.grads(uf)
        s = gx * gx + gy * gy + self.problem.delta_reg
        a = self.area * s ** ((p - 2) / 2)
        return self.Gx_f.T @ (a * gx) + self.Gy_f.T @ (a * gy)

    def hessian(self, uf, p):
        gx, gy = self.grads(uf)
        s = gx * gx + gy * gy + self.problem.delta_reg
        a = self.area * s ** ((p - 2) / 2)
        b = self.area * (p - 2) * s ** ((p - 4) / 2)
        a11 = sp.diags(a + b * gx * gx)
        a22 = sp.diags(a + b * gy * gy)
        a12 = sp.diags(b * gx * gy)
        Gx, Gy = self.Gx_f, self.Gy_f
        H = Gx.T @ a11 @ Gx + Gy.T @ a22 @ Gy + Gx.T @ a12 @ Gy + Gy.T @ a12 @ Gx
        return H.tocsc()


def solve_plaplace(problem, tol=1e-8, max_iter=200):
    """Minimise the discrete p-energy; returns a :class:`GridField`.

    ``tol`` bounds the sup-norm of the discrete Euler-Lagrange residual
    (energy gradient divided by ``h^2``), computed after the data are
    rescaled to the range ``[0, 1]``.  For ``p > 2`` Newton converges
    only linearly near critical points, and rounding can stop progress
    before ``tol`` (for ``p < 2`` the regularised residual near critical
    points is limited the same way); the run then ends with status
    ``"stagnated"`` when no step decreases the energy in floating point.

    Raises
    ------
    FdError
        If Newton fails to come within ``1000 * tol`` in ``max_iter`` steps.
    """
    E = PEnergy(problem)
    p = problem.p
    h2 = problem.h ** 2
    # p = 2 start: one linear solve
    uf = np.zeros(len(E.free))
    H2 = E.hessian(uf, 2.0)
    uf = spla.spsolve(H2, -E.gradient(uf, 2.0))
    history = []
    energies = []
    it = 0
    status = "converged"
    while True:
        g = E.gradient(uf, p)
        res = float(np.max(np.abs(g))) / h2 if len(g) else 0.0
        e0 = E.energy(uf, p)
        history.append(res)
        energies.append(e0)
        if res < tol:
            break
        if it >= max_iter:
            if res < 1e3 * tol:
                status = "stagnated"
                break
            raise FdError(f"no convergence in {max_iter} Newton steps; residual {res:.3e}")
        du = spla.spsolve(E.hessian(uf, p), -g)
        slope = float(g @ du)
        if not slope < 0:
            du = -g
            slope = -float(g @ g)
        t = 1.0
        accepted = False
        while t > 1e-14:
            trial = uf + t * du
            e1 = E.energy(trial, p)
            if e1 <= e0 + 1e-4 * t * slope:
                accepted = True
                break
            t *= 0.5
        if accepted and e1 < e0:
            uf = trial
        else:
            # the energy no longer decreases in floating point: the iterate is
            # a minimiser to working precision
            status = "stagnated"
            break
        it += 1
    u = E.full(uf).reshape(E.shape)
    meta = {"p": p, "h": problem.h, "radius": problem.radius, "delta_reg": problem.delta_reg,
            "boundary_key": problem.boundary.key, "boundary": problem.boundary.describe(),
            "iterations": it, "residual": history[-1], "history": history,
            "energies": energies, "status": status, "solver": "fd"}
    return GridField(problem.h, E.lo.copy(), u, meta, radius=problem.radius)


def cross_validate(field_dpp, field_fd, margin):
    """Sup and mean absolute difference on ``|x| <= 1 - margin``.

    Both fields must carry the same boundary-data key.
    """
    k1 = field_dpp.meta.get("boundary_key") or field_dpp.meta.get("config", {}).get("boundary", {}).get("key")
    k2 = field_fd.meta.get("boundary_key") or field_fd.meta.get("config", {}).get("boundary", {}).get("key")
    if k1 != k2:
        raise FieldError("boundary data differ between the two fields")
    x = field_dpp.coords().reshape(-1, field_dpp.d)
    keep = np.linalg.norm(x, axis=1) <= 1.0 - margin
    x = x[keep]
    a = field_dpp.values.reshape(-1)[keep]
    b = evaluate(field_fd, x)
    diff = np.abs(a - b)
    return {"sup_diff": float(diff.max()) if len(diff) else 0.0,
            "mean_diff": float(diff.mean()) if len(diff) else 0.0,
            "points": int(len(diff)), "margin": float(margin)}


def radial_profile(p, d=2):
    """Exponent ``(p - d) / (p - 1)`` of the radial p-harmonic power ``r^k``."""
    return (p - d) / (p - 1)


def discrete_max_principle_gap(field, boundary_values):
    lo, hi = float(np.min(boundary_values)), float(np.max(boundary_values))
    v = field.values
    return max(lo - float(v.min()), float(v.max()) - hi, 0.0)


def harnack_ratio(field, r=1.0):
    """``max_{B_r} u / u(0)`` over lattice nodes in the closed ball ``B_r``."""
    x = field.coords().reshape(-1, field.d)
    inside = np.linalg.norm(x, axis=1) <= r * (1 + 1e-12)
    u0 = float(np.ravel(evaluate(field, np.zeros(field.d)))[0])
    if not u0 > 0:
        raise FdError("the value at the centre must be positive")
    return float(field.values.reshape(-1)[inside].max()) / u0
