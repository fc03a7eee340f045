"""Closed-form Harnack and Hoelder constants.

Everything that can overflow is returned as a natural logarithm.  Unnamed
absolute constants in the constant shapes are set to one.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

HOLDER_C = 1e4
HOLDER_GAMMA = 0.2


class ConstantsError(ValueError):
    pass


@dataclass(frozen=True)
class HolderParams:
    """Oscillation decay ``A (r/R)^gamma`` and growth ``inf u <= C r^{-lambda}``."""

    A: float
    gamma: float
    C_growth: float
    lambda_: float

    def __post_init__(self):
        if not self.A >= 1:
            raise ConstantsError("A must be at least 1")
        if not 0 < self.gamma <= 1:
            raise ConstantsError("gamma must lie in (0, 1]")
        if not self.C_growth > 0:
            raise ConstantsError("C must be positive")
        if not self.lambda_ > 0:
            raise ConstantsError("lambda must be positive")


def log_lemma_bound(hp):
    """``ln(4 C) + lambda (ln(4 A) / gamma + 2 ln(2 lambda))``."""
    return (math.log(4.0 * hp.C_growth)
            + hp.lambda_ * (math.log(4.0 * hp.A) / hp.gamma + 2.0 * math.log(2.0 * hp.lambda_)))


def lemma_bound(hp):
    """``4 C exp(lambda (ln(4 A) / gamma + 2 ln(2 lambda)))`` (may be ``inf``).

    Evaluated as ``4 C (4 A)^{lambda/gamma} (2 lambda)^{2 lambda}`` so that
    integer cases come out exact.
    """
    try:
        return (4.0 * hp.C_growth * (4.0 * hp.A) ** (hp.lambda_ / hp.gamma)
                * (2.0 * hp.lambda_) ** (2.0 * hp.lambda_))
    except OverflowError:
        return math.inf


def _check_p(p):
    if not p > 1:
        raise ConstantsError("p must exceed 1")


def holder_bound(delta, p, d):
    """``(1e4 d / (p-1)) delta^{1/5}``: oscillation ratio bound on ``B_delta``."""
    _check_p(p)
    if not 0 < delta < 1:
        raise ConstantsError("delta must lie in (0, 1)")
    return HOLDER_C * d / (p - 1) * delta ** HOLDER_GAMMA


def mild_growth_params(p, d):
    """``(2^{d/(p-1)}, (d-p)/(p-1))`` from the fundamental-solution barrier.

    Raises
    ------
    ConstantsError
        For ``p >= d``, where the barrier exponent is not positive.
    """
    _check_p(p)
    if p >= d:
        raise ConstantsError("barrier exponent nonpositive; regime not covered by the barrier (p >= d)")
    return 2.0 ** (d / (p - 1)), (d - p) / (p - 1)


def log_mild_growth_C(p, d):
    mild_growth_params(p, d)
    return d / (p - 1) * math.log(2.0)


def barrier_eval(x, z, lam):
    """``(|x-z|^{-lam} - 3^{-lam}) / (|z|^{-lam} - 3^{-lam})``."""
    x = np.asarray(x, dtype=float)
    z = np.asarray(z, dtype=float)
    r = np.linalg.norm(x - z, axis=-1)
    rz = float(np.linalg.norm(z))
    if np.any(r == 0):
        raise ConstantsError("barrier singular at its pole")
    if rz == 0 or rz >= 3:
        raise ConstantsError("need 0 < |z| < 3")
    if np.any(r > 3 * (1 + 1e-12)):
        raise ConstantsError("need |x - z| <= 3")
    t3 = 3.0 ** (-lam)
    return (r ** (-lam) - t3) / (rz ** (-lam) - t3)


def radial_residual(r, lam, p, d):
    """``(p-1) u'' + (d-1) u' / r`` for ``u = r^{-lam}`` (zero when ``lam = (d-p)/(p-1)``)."""
    r = np.asarray(r, dtype=float)
    u1 = -lam * r ** (-lam - 1)
    u2 = lam * (lam + 1) * r ** (-lam - 2)
    return (p - 1) * u2 + (d - 1) * u1 / r


def h5_params(p, d):
    C, lam = mild_growth_params(p, d)
    return HolderParams(A=HOLDER_C * d / (p - 1), gamma=HOLDER_GAMMA, C_growth=C, lambda_=lam)


def harnack_H5(p, d):
    """``ln`` of the Harnack constant on ``B_1`` inside ``B_5``."""
    _, lam = mild_growth_params(p, d)
    A = HOLDER_C * d / (p - 1)
    return (math.log(4.0) + log_mild_growth_C(p, d)
            + lam * (math.log(4.0 * A) / HOLDER_GAMMA + 2.0 * math.log(2.0 * lam)))


def chain_construct(x0, R):
    """Chain of balls ``B(x_n, d_n)`` from ``x0`` toward the centre of ``B_R``.

    ``d_n = (5/4)^n (R - |x0|)`` and ``x_n = (R - d_n)/(R - d_{n-1}) x_{n-1}``,
    so ``|x_n| + d_n = R``; the chain stops at the first ``N`` with
    ``(5/4) d_N > R``.  Returns ``[(x_0, d_0), ..., (x_N, d_N)]``.
    """
    x = np.asarray(x0, dtype=float)
    if not R > 1:
        raise ConstantsError("R must exceed 1")
    if not np.linalg.norm(x) < 1:
        raise ConstantsError("need |x0| < 1")
    dn = R - float(np.linalg.norm(x))
    chain = [(x.copy(), dn)]
    while not 1.25 * dn > R:
        nd = 1.25 * dn
        x = (R - nd) / (R - dn) * x
        dn = nd
        chain.append((x.copy(), dn))
    return chain


def chain_length(x0, R):
    return len(chain_construct(x0, R)) - 1


def chain_length_bound(R):
    """``5 ln(R / (R - 1))``."""
    return 5.0 * math.log(R / (R - 1.0))


def harnack_general_R(R, p, d):
    """``ln`` of the Harnack constant on ``B_1`` inside ``B_R``.

    For ``R < 5`` chaining gives ``5 ln(R/(R-1)) ln H_5``; for ``R >= 5``
    the oscillation estimate gives ``ln(1 + (1e4 d/(p-1)) (5/R)^{1/5} H_5)``.
    """
    if not R > 1:
        raise ConstantsError("R must exceed 1")
    h5 = harnack_H5(p, d)
    if R < 5:
        return 5.0 * math.log(R / (R - 1.0)) * h5
    return _large_R(R, p, d, h5)


def _large_R(R, p, d, h5):
    t = math.log(HOLDER_C * d / (p - 1)) + HOLDER_GAMMA * math.log(5.0 / R) + h5
    return float(np.logaddexp(0.0, t))


def harnack_general_R_branches(R, p, d):
    """Both branch formulas at the same ``R`` (for continuity checks)."""
    h5 = harnack_H5(p, d)
    return 5.0 * math.log(R / (R - 1.0)) * h5, _large_R(R, p, d, h5)


@dataclass
class ComparatorRow:
    p: float
    d: int
    x: float
    s1: float
    s2: float
    log_s3: float
    ordering: str
    meaningful: bool
    crossover_d: int | None


def shapes(p, d):
    """Constant shapes ``s1 = x ln x``, ``s2 = x^2`` and ``ln s3 = d ln 2``,
    with ``x = d/(p-1)``."""
    _check_p(p)
    x = d / (p - 1)
    return x * math.log(x), x * x, d * math.log(2.0)


def _ordering(s1, s2, log_s3):
    ls2 = math.log(s2)
    ls1 = math.log(s1) if s1 > 0 else -math.inf
    if ls1 < ls2 < log_s3:
        return "paper<lps<moser"
    names = sorted([("paper", ls1), ("lps", ls2), ("moser", log_s3)], key=lambda t: t[1])
    return "<=".join(n for n, _ in names)


def crossover_dimension(p, d_max=100_000):
    """Smallest ``d0`` such that ``s1 < s2 < s3`` for every ``d0 <= d <= d_max``."""
    last_bad = 1
    for d in range(2, d_max + 1):
        s1, s2, l3 = shapes(p, d)
        if _ordering(s1, s2, l3) != "paper<lps<moser":
            last_bad = d
    return last_bad + 1 if last_bad < d_max else None


def compare_methods(p, d, d_max=10_000):
    """Three constant shapes and their ordering at ``(p, d)``.

    ``meaningful`` is false when ``d/(p-1) <= e`` (then ``s1 <= e`` and the
    logarithmic advantage has not set in).
    """
    s1, s2, l3 = shapes(p, d)
    x = d / (p - 1)
    return ComparatorRow(p, int(d), x, s1, s2, l3, _ordering(s1, s2, l3), x > math.e,
                         crossover_dimension(p, d_max))


REPORT_COLUMNS = ["p", "d", "R", "log_bound_paper", "log_bound_lps", "log_log_bound_moser",
                  "chain_length", "shape_paper", "ordering", "note"]


def harnack_shape_bound(p, d, scale=10.0):
    """``scale * exp(x ln x)`` with ``x = d/(p-1)``: the Harnack bound shape
    with its absolute constant set to one, inflated by ``scale``."""
    s1, _, _ = shapes(p, d)
    return scale * math.exp(s1)


def classical_harnack_ratio(r, R, d=2):
    """Sharp ``sup_{B_r} u / u(0)`` for positive harmonic ``u`` in ``B_R``:
    ``R^{d-2} (R + r) / (R - r)^{d-1}``."""
    if not 0 <= r < R:
        raise ConstantsError("need 0 <= r < R")
    return R ** (d - 2) * (R + r) / (R - r) ** (d - 1)


def report_row(p, d, R):
    """One ConstantReport row; the barrier-based bound is absent for ``p >= d``."""
    s1, s2, l3 = shapes(p, d)
    note = ""
    try:
        paper = harnack_general_R(R, p, d)
    except ConstantsError as exc:
        paper = float("nan")
        note = str(exc)
    if not d / (p - 1) > math.e:
        note = (note + "; " if note else "") + "d/(p-1) <= e: shape comparison not meaningful"
    x_edge = np.zeros(d)
    x_edge[0] = 1.0 - 1e-12
    return {"p": p, "d": d, "R": R, "log_bound_paper": paper, "log_bound_lps": s2,
            "log_log_bound_moser": l3, "chain_length": chain_length(x_edge, R) if R > 1 else 0,
            "shape_paper": s1, "ordering": _ordering(s1, s2, l3), "note": note}


def constant_report(ps, ds, Rs):
    return [report_row(p, d, R) for p in ps for d in ds for R in Rs]


# -- doubling chain -------------------------------------------------------------

def doubling_diagnostic(field, hp, L=1.0, k_max=200):
    """Argmax chain ``x_{k+1} = argmax_{B(x_k, L/k^2)} u`` starting at 0.

    Records ``M_k = max_{B(x_k, L R_k)} u`` with ``R_k = 1/k^2`` and reports
    the first ``k`` with ``M_{k+1} < 2 M_k``.  The chain is truncated when a
    ball leaves the field's domain or shrinks below the lattice spacing.
    """
    coords = field.coords().reshape(-1, field.d)
    vals = field.values.reshape(-1)
    inside = np.linalg.norm(coords, axis=1) <= field.radius * (1 + 1e-12)
    coords = coords[inside]
    vals = vals[inside]
    x = np.zeros(field.d)
    M = []
    notice = None
    for k in range(1, k_max + 1):
        rad = L / k ** 2
        if np.linalg.norm(x) + rad > field.radius * (1 + 1e-12):
            notice = "chain left the field domain; truncated"
            break
        if rad < field.h:
            notice = "ball radius below lattice spacing; truncated"
            break
        sel = np.linalg.norm(coords - x, axis=1) <= rad * (1 + 1e-12)
        i = int(np.argmax(np.where(sel, vals, -np.inf)))
        M.append(float(vals[i]))
        x = coords[i]
    first_fail = None
    for k in range(len(M) - 1):
        if not M[k + 1] >= 2 * M[k]:
            first_fail = k + 1
            break
    return {"M": M, "first_failure": first_fail, "notice": notice,
            "delta": (4 * hp.A) ** (-1 / hp.gamma), "sup_field": float(vals.max()),
            "bounded": (max(M) <= float(vals.max())) if M else True}
