import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from tugharnack.boundary import Constant
from tugharnack.coupling import (AdversarialSpread, CoupledState, CouplingError, CouplingParams,
                                 PullOut, PullRandom, alignment_ratio_exact, combine,
                                 counter_move_I, counter_move_II, coupled_noise_pair,
                                 coupled_step, coupled_transition, coupling_rotations,
                                 escape_bound, is_aligned, lyapunov, one_sided,
                                 random_aligned_configuration, rotation_angles, run_battery,
                                 run_coupled, run_coupled_batch, verify_alignment_inequality,
                                 verify_decrements, verify_unbiased)
from tugharnack.game import GameConfig


def gcfg(p=2.0, d=3, eps=0.01):
    return GameConfig(p, d, eps, Constant(0.0))


def test_params_validation():
    with pytest.raises(CouplingError):
        CouplingParams(theta0=0.2)
    with pytest.raises(CouplingError):
        CouplingParams(theta0=0.1)
    r = CouplingParams().resolve(gcfg(p=2.0, d=3, eps=0.01))
    assert r.eta == pytest.approx(0.02)
    assert r.C_lyap == pytest.approx(6000 * 3)


def test_counter_moves():
    P = CouplingParams(theta0=0.05)
    Z = np.array([1.0, 0, 0])
    eps = 0.1
    U = np.array([eps, 0, 0])
    assert np.allclose(counter_move_II(U, Z, P, eps), -U)
    U2 = np.array([0, eps, 0])
    assert np.allclose(counter_move_II(U2, Z, P, eps), [-eps, 0, 0])
    V = np.array([-eps, 0, 0])
    assert np.allclose(counter_move_I(V, Z, P, eps), -V)
    assert np.allclose(counter_move_I(np.zeros(3), Z, P, eps), [eps, 0, 0])
    with pytest.raises(CouplingError, match="illegal"):
        counter_move_II(2 * U, Z, P, eps)
    with pytest.raises(CouplingError, match="merged"):
        counter_move_II(U, np.zeros(3), P, eps)


def test_is_aligned_threshold():
    Z = np.array([1.0, 0, 0])
    t = 0.05
    inside = np.array([math.cos(0.049), math.sin(0.049), 0])
    outside = np.array([math.cos(0.051), math.sin(0.051), 0])
    assert is_aligned(inside, -inside, Z, t)
    assert not is_aligned(outside, -inside, Z, t)
    with pytest.raises(CouplingError):
        is_aligned(np.zeros(3), -inside, Z, t)


@settings(max_examples=40)
@given(st.integers(0, 10 ** 6), st.sampled_from([3, 4, 6]))
def test_noise_pair_invariants(seed, d):
    rng = np.random.default_rng(seed)
    c = gcfg(d=d)
    U, V, Z = random_aligned_configuration(d, 0.05, rng, eps=c.eps)
    B, Bp = coupled_noise_pair(U[None], V[None], Z[None], c, rng)
    r = c.R * c.eps
    assert abs(np.linalg.norm(B) - r) < 1e-9
    assert abs(np.linalg.norm(Bp) - r) < 1e-9
    assert abs(float(B[0] @ U)) < 1e-9
    assert abs(float(Bp[0] @ V)) < 1e-9


def test_noise_pair_requires_alignment():
    c = gcfg()
    with pytest.raises(CouplingError):
        coupled_noise_pair(np.array([[0, c.eps, 0]]), np.array([[-c.eps, 0, 0]]),
                           np.array([[1.0, 0, 0]]), c, np.random.default_rng(0))


def test_rotations_map_lines():
    rng = np.random.default_rng(1)
    U, V, Z = random_aligned_configuration(4, 0.05, rng)
    S, Sp = coupling_rotations(U, V, Z)
    zh = Z / np.linalg.norm(Z)
    assert abs(abs(S.apply(zh) @ U / np.linalg.norm(U)) - 1) < 1e-12
    assert abs(abs(Sp.apply(zh) @ V / np.linalg.norm(V)) - 1) < 1e-12
    t1, t2, psi = rotation_angles(S, Sp)
    assert 0 <= t1 < 0.05 and 0 <= t2 < 0.05 and 0 <= psi <= math.pi / 2


def test_alignment_ratio_exact_planar_rotation():
    # rotations in one plane, in opposite senses
    Z = np.array([1.0, 0, 0])
    U = np.array([math.cos(0.03), math.sin(0.03), 0])
    V = -np.array([math.cos(0.03), -math.sin(0.03), 0])
    num, den = alignment_ratio_exact(U, V, Z)
    assert den > 0
    assert num / den >= 0.75


@settings(max_examples=15)
@given(st.integers(0, 10 ** 6))
def test_alignment_monte_carlo_matches_exact(seed):
    rng = np.random.default_rng(seed)
    c = gcfg(d=3)
    U, V, Z = random_aligned_configuration(3, 0.05, rng, eps=c.eps)
    num, den = alignment_ratio_exact(U, V, Z)
    out = verify_alignment_inequality(U, V, Z, c, 20000, rng)
    if den > 1e-20:
        assert abs(out["ratio"] - num / den) < 5 * out["se"] + 1e-9
        assert num / den >= 0.75
    assert out["verdict"] == "PASS"


def test_alignment_needs_d3():
    c = gcfg(d=2)
    with pytest.raises(CouplingError):
        verify_alignment_inequality(np.array([0.01, 0]), np.array([-0.01, 0]),
                                    np.array([1.0, 0]), c, 100, np.random.default_rng(0))


@settings(max_examples=25)
@given(st.integers(0, 10 ** 6), st.sampled_from([1.5, 2.0, 3.0]))
def test_transition_increment_bound(seed, p):
    rng = np.random.default_rng(seed)
    c = gcfg(p=p, d=3, eps=0.01)
    P = CouplingParams().resolve(c)
    X = rng.uniform(-0.3, 0.3, (50, 3))
    Y = rng.uniform(-0.3, 0.3, (50, 3))
    for adv in (PullOut(), PullRandom(), AdversarialSpread()):
        U, V = adv.proposals(X, Y, c, rng)
        out = coupled_transition(X, Y, U, V, c, P, rng)
        assert np.all(np.linalg.norm(out["D"], axis=1) <= (2 + 2 * c.R) * c.eps * (1 + 1e-12))


def test_aligned_step_is_antithetic():
    # the averaged increment in Z is exactly zero on aligned steps: checked
    # through the realised D averaging over many steps
    rng = np.random.default_rng(3)
    c = gcfg(p=2.0, d=3, eps=0.01)
    P = CouplingParams().resolve(c)
    X = np.tile([0.2, 0, 0], (20000, 1))
    Y = np.tile([-0.2, 0, 0], (20000, 1))
    U, V = AdversarialSpread().proposals(X, Y, c, rng)
    out = coupled_transition(X, Y, U, V, c, P, rng)
    assert np.all(out["aligned"])
    D = out["D"]
    se = D.std(axis=0) / math.sqrt(len(D))
    assert np.all(np.abs(D.mean(axis=0)) < 4 * se + 1e-15)


def test_lyapunov_formula():
    P = CouplingParams(C_lyap=10.0, eta=0.1)
    X = np.array([0.1, 0.2])
    Y = np.array([0.0, 0.2])
    assert lyapunov(X, Y, X - Y, P) == pytest.approx(0.05 + 0.04 + 10 * 0.1 ** 0.2)


def test_run_coupled_stops():
    c = gcfg(p=2.0, d=3, eps=0.02)
    t = run_coupled(np.array([0.3, 0, 0]), np.array([-0.3, 0, 0]), c, CouplingParams(),
                    PullOut(), np.random.default_rng(0), n_max=100_000)
    assert t.reason in ("merged", "X_escaped", "Y_escaped")
    assert len(t.X) == t.steps + 1
    assert t.steps > 0


def test_run_coupled_start_error():
    c = gcfg()
    with pytest.raises(CouplingError):
        run_coupled(np.array([0.999, 0, 0]), np.zeros(3), c, CouplingParams(), PullOut(),
                    np.random.default_rng(0))


def test_pull_out_merges_fast():
    # player I always plays U = eps Z_hat: every step aligned, |Z| shrinks
    c = gcfg(p=3.0, d=3, eps=0.01)
    X0 = np.array([0.1, 0, 0])
    Y0 = np.array([-0.1, 0, 0])
    tr = run_coupled_batch(np.tile(X0, (20, 1)), np.tile(Y0, (20, 1)), c, CouplingParams(),
                           AdversarialSpread(spread=0.0), np.random.default_rng(1), n_max=20000)
    assert all(t.reason is not None for t in tr)
    assert np.mean([t.reason == "merged" for t in tr]) > 0.5


def test_coupled_step_single():
    c = gcfg()
    s = CoupledState(np.array([0.1, 0, 0]), np.array([-0.1, 0, 0]))
    s2 = coupled_step(s, PullRandom(), c, CouplingParams(), np.random.default_rng(0))
    assert s2.n == 1


def test_one_sided_and_combine():
    v = np.random.default_rng(0).normal(-1.0, 1.0, 5000)
    assert one_sided("x", v, 0.0)["verdict"] == "PASS"
    assert one_sided("x", v + 2, 0.0)["verdict"] == "FAIL"
    assert one_sided("x", v[:10], 0.0)["verdict"] == "INDETERMINATE"
    assert one_sided("x", v[:0], 0.0)["verdict"] == "SKIPPED"
    assert combine(["PASS", "SKIPPED"]) == "PASS"
    assert combine(["PASS", "INDETERMINATE"]) == "INDETERMINATE"
    assert combine(["PASS", "FAIL"]) == "FAIL"


def test_verify_small_battery_runs():
    c = gcfg(p=2.0, d=3, eps=0.02)
    P = CouplingParams()
    runs = run_battery(c, P, 10, seed=0, n_max=3000)
    for traces in runs.values():
        r = verify_decrements(traces, P.resolve(c), c.eps)
        assert r["verdict"] in ("PASS", "INDETERMINATE")
        assert verify_unbiased(traces)["verdict"] in ("PASS", "INDETERMINATE", "SKIPPED")


def test_escape_bound_clipped():
    P = CouplingParams().resolve(gcfg())
    assert escape_bound(P, 0.01) == 1.0
    assert escape_bound(CouplingParams(C_lyap=1.0, eta=0.1), 1e-20) < 1.0
