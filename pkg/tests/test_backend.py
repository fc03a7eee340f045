import math
import os
import subprocess
import sys

import numpy as np
import pytest

from tugharnack import _backend, _pycore
from tugharnack.boundary import from_name
from tugharnack.dpp import initial_guess, operator_for
from tugharnack.game import GameConfig
from tugharnack.planar import alpha_for, default_rect_chain

core = pytest.importorskip("tugharnack._core")


@pytest.mark.parametrize("d,h", [(2, 0.05), (3, 0.1)])
def test_dpp_sweep_identical(d, h):
    cfg = GameConfig(2.5, d, 0.2, from_name("cos", d=d))
    op = operator_for(cfg, h)
    u = initial_guess(op)
    a, b = u.copy(), u.copy()
    ra = _pycore.dpp_sweep(u, a, op.interior, op.offsets, op.coefs, op.move_ptr)
    rb = core.dpp_sweep(u, b, op.interior, op.offsets, op.coefs, op.move_ptr)
    assert ra == rb
    assert np.array_equal(a, b)


def test_find_loop_identical():
    rng = np.random.default_rng(0)
    for _ in range(20):
        xy = np.cumsum(rng.normal(0, 0.3, size=(400, 2)), axis=0)
        a = _pycore.find_loop(xy, 1.0, 0.5)
        b = core.find_loop(np.ascontiguousarray(xy), 1.0, 0.5)
        assert (a is None) == (b is None)
        if a is not None:
            assert tuple(a) == tuple(b)


@pytest.mark.parametrize("adv", [0, 1])
def test_planar_trials_identical(adv):
    p, eps = 3.0, 0.05
    R = math.sqrt(1 / (p - 1))
    gam = default_rect_chain().gammas()
    args = (gam, R, eps, alpha_for(p), 4.0, adv, 12345, 7, 8, 5000, 1.0, 4 * eps * math.sqrt(1 + R * R))
    a = _pycore.planar_trials(*args)
    b = core.planar_trials(*args)
    for k in a:
        assert np.array_equal(np.asarray(a[k]), np.asarray(b[k])), k


def test_pure_env_selects_python():
    env = dict(os.environ, TUGHARNACK_PURE="1")
    r = subprocess.run([sys.executable, "-c", "from tugharnack import _backend; print(_backend.NAME)"],
                       capture_output=True, text=True, env=env)
    assert r.stdout.strip() == "python"
    assert _backend.NAME == "cython"
