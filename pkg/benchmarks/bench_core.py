"""Compiled vs pure-Python kernels on identical inputs.

Run with ``python benchmarks/bench_core.py``.  Each kernel is timed with
``timeit`` (best of ``--repeat`` runs) and the outputs of the two
backends are checked for bit-identity.
"""

import argparse
import math
import timeit

import numpy as np

from tugharnack import _pycore
from tugharnack.boundary import from_name
from tugharnack.dpp import initial_guess, operator_for
from tugharnack.game import GameConfig
from tugharnack.planar import alpha_for, default_rect_chain

try:
    from tugharnack import _core
except ImportError:  # extension not built
    _core = None


def dpp_case(h):
    cfg = GameConfig(2.0, 2, 0.1, from_name("cos"))
    op = operator_for(cfg, h)
    u = initial_guess(op)

    def run(mod):
        out = u.copy()
        mod.dpp_sweep(u, out, op.interior, op.offsets, op.coefs, op.move_ptr)
        return out

    return f"dpp_sweep (h={h}, {len(op.interior)} nodes)", run


def loop_case(n):
    xy = np.ascontiguousarray(np.cumsum(np.random.default_rng(0).normal(0, 0.05, (n, 2)), axis=0))

    def run(mod):
        return mod.find_loop(xy, 1.0, 0.2)

    return f"find_loop ({n} vertices)", run


def planar_case(trials):
    p, eps = 3.0, 0.04
    R = math.sqrt(1 / (p - 1))
    args = (default_rect_chain().gammas(), R, eps, alpha_for(p), 4.0, 1, 99, 0, trials, 50_000,
            1.0, 4 * eps * math.sqrt(1 + R * R))

    def run(mod):
        return mod.planar_trials(*args)

    return f"planar_trials ({trials} trials, random adversary)", run


def same(a, b):
    if isinstance(a, dict):
        return all(np.array_equal(np.asarray(a[k]), np.asarray(b[k])) for k in a)
    if a is None or b is None:
        return a is b
    return np.array_equal(np.asarray(a), np.asarray(b))


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()
    if _core is None:
        print("compiled extension not available; nothing to compare")
        return
    cases = [dpp_case(0.02), loop_case(20_000), planar_case(20)]
    print(f"{'kernel':48s} {'cython [s]':>11s} {'python [s]':>11s} {'speed-up':>9s}  identical")
    for name, run in cases:
        tc = min(timeit.repeat(lambda: run(_core), number=1, repeat=args.repeat))
        tp = min(timeit.repeat(lambda: run(_pycore), number=1, repeat=args.repeat))
        print(f"{name:48s} {tc:11.4f} {tp:11.4f} {tp / tc:9.1f}  {same(run(_core), run(_pycore))}")


if __name__ == "__main__":
    main()
