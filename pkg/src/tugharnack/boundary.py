"""Boundary data on the unit sphere.

A boundary function is evaluated on points of the unit sphere (inputs are
radially projected first, so data on ``dB_rho`` is read off by angle).
Each object carries a stable ``key`` used to tag fields computed from it,
and an ``extension`` into the ball used for initial guesses and Dirichlet
values; for affine and trigonometric data the extension is the exact
harmonic one.
"""

from __future__ import annotations

import hashlib
import json

import numpy as np


def _project(x):
    x = np.asarray(x, dtype=float)
    n = np.linalg.norm(x, axis=-1, keepdims=True)
    return x / np.where(n > 0, n, 1.0)


class Boundary:
    """Base class; subclasses implement ``_eval`` on unit vectors."""

    name = "boundary"

    def __init__(self, **params):
        self.params = params

    @property
    def key(self):
        blob = json.dumps({"name": self.name, "params": self.params}, sort_keys=True, default=_jsonable)
        return hashlib.sha256(blob.encode()).hexdigest()[:16]

    def __call__(self, x):
        return self._eval(_project(x))

    def extension(self, x):
        """Interior extension (radial projection by default)."""
        return self(x)

    def describe(self):
        return {"name": self.name, "params": self.params, "key": self.key}

    def __neg__(self):
        return Transformed(self, scale=-1.0)

    def __add__(self, c):
        return Transformed(self, shift=float(c))

    def rotated(self, Q):
        """Data ``F(Q^T y)``, i.e. ``F`` rotated by the orthogonal matrix ``Q``."""
        return Transformed(self, rotation=np.asarray(Q, dtype=float))


def _jsonable(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, Boundary):
        return o.describe()
    return str(o)


class Constant(Boundary):
    name = "constant"

    def __init__(self, c):
        super().__init__(c=float(c))
        self.c = float(c)

    def _eval(self, y):
        return np.full(y.shape[:-1], self.c)

    def extension(self, x):
        return np.full(np.asarray(x).shape[:-1], self.c)


class Affine(Boundary):
    """``F(y) = a . y + b``."""

    name = "affine"

    def __init__(self, a, b=0.0):
        self.a = np.asarray(a, dtype=float)
        self.b = float(b)
        super().__init__(a=self.a.tolist(), b=self.b)

    def _eval(self, y):
        return y @ self.a + self.b

    def extension(self, x):
        return np.asarray(x, dtype=float) @ self.a + self.b


class Trig(Boundary):
    """Planar data ``offset + amp * cos(k theta + phase)``."""

    name = "trig"

    def __init__(self, k=1, amp=1.0, phase=0.0, offset=0.0):
        super().__init__(k=int(k), amp=float(amp), phase=float(phase), offset=float(offset))
        self.k = int(k)
        self.amp = float(amp)
        self.phase = float(phase)
        self.offset = float(offset)

    def _eval(self, y):
        th = np.arctan2(y[..., 1], y[..., 0])
        return self.offset + self.amp * np.cos(self.k * th + self.phase)

    def extension(self, x):
        # harmonic extension r^k cos(k theta + phase), exact for p = 2
        x = np.asarray(x, dtype=float)
        r = np.linalg.norm(x[..., :2], axis=-1)
        th = np.arctan2(x[..., 1], x[..., 0])
        return self.offset + self.amp * r ** self.k * np.cos(self.k * th + self.phase)


class VonMises(Boundary):
    """Planar bump ``scale * exp(kappa * cos(theta - center))``."""

    name = "vonmises"

    def __init__(self, kappa=1.0, center=0.0, scale=1.0):
        super().__init__(kappa=float(kappa), center=float(center), scale=float(scale))
        self.kappa = float(kappa)
        self.center = float(center)
        self.scale = float(scale)

    def _eval(self, y):
        th = np.arctan2(y[..., 1], y[..., 0])
        return self.scale * np.exp(self.kappa * np.cos(th - self.center))


class Sampled(Boundary):
    """Planar data given by values at equispaced angles, periodic linear interpolation."""

    name = "sampled"

    def __init__(self, values):
        self.values = np.asarray(values, dtype=float)
        super().__init__(values=self.values.tolist())

    def _eval(self, y):
        n = len(self.values)
        th = np.mod(np.arctan2(y[..., 1], y[..., 0]), 2 * np.pi)
        s = th / (2 * np.pi) * n
        i = np.floor(s).astype(int) % n
        t = s - np.floor(s)
        return (1 - t) * self.values[i] + t * self.values[(i + 1) % n]


class Transformed(Boundary):
    """``scale * F(Q^T y) + shift``."""

    name = "transformed"

    def __init__(self, base, scale=1.0, shift=0.0, rotation=None):
        self.base = base
        self.scale = float(scale)
        self.shift = float(shift)
        self.rotation = rotation
        super().__init__(base=base.describe(), scale=self.scale, shift=self.shift,
                         rotation=None if rotation is None else np.asarray(rotation).tolist())

    def _map(self, x):
        x = np.asarray(x, dtype=float)
        return x if self.rotation is None else x @ self.rotation

    def _eval(self, y):
        return self.scale * self.base._eval(self._map(y)) + self.shift

    def extension(self, x):
        return self.scale * self.base.extension(self._map(x)) + self.shift


class FunctionBoundary(Boundary):
    """Wraps a vectorised callable on unit vectors."""

    name = "function"

    def __init__(self, fn, label):
        super().__init__(label=str(label))
        self.fn = fn

    def _eval(self, y):
        return np.asarray(self.fn(y), dtype=float)


def from_name(name, d=2, **kw):
    """Built-in boundary data by name (used by the CLI)."""
    if name == "cos":
        return Affine(np.eye(d)[0]) if d != 2 else Trig(1)
    if name == "constant":
        return Constant(kw.get("c", 1.0))
    if name == "affine":
        a = kw.get("a", np.eye(d)[0])
        return Affine(a, kw.get("b", 0.0))
    if name == "trig":
        return Trig(**kw)
    if name == "vonmises":
        return VonMises(**kw)
    raise ValueError(f"unknown boundary data {name!r}")


def positive_battery():
    """Twenty strictly positive planar boundary functions."""
    out = []
    for k in (1, 2, 3, 5):
        for amp in (0.5, 0.9):
            out.append(Trig(k=k, amp=amp, phase=0.3 * k, offset=1.0))
    for kappa in (0.5, 1.0, 2.0, 4.0, 8.0):
        out.append(VonMises(kappa=kappa, center=0.7 * kappa))
    out.append(Constant(2.0))
    rng = np.random.default_rng(20240611)
    for _ in range(6):
        out.append(Sampled(np.exp(rng.normal(0.0, 1.0, size=12))))
    return out
