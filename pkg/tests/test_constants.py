import math

import numpy as np
import pytest
from hypothesis import assume, given, strategies as st

from tugharnack.constants import (HOLDER_C, HOLDER_GAMMA, ConstantsError, HolderParams,
                                  barrier_eval, chain_construct, chain_length,
                                  chain_length_bound, compare_methods, constant_report,
                                  crossover_dimension, doubling_diagnostic, harnack_general_R,
                                  harnack_general_R_branches, harnack_H5, holder_bound,
                                  lemma_bound, log_lemma_bound, mild_growth_params,
                                  radial_residual, shapes)
from tugharnack.dpp import GridField, lattice


def test_lemma_bound_unit_case_exact():
    assert lemma_bound(HolderParams(1, 1, 1, 1)) == 64.0


def test_lemma_bound_small_lambda_limit():
    assert lemma_bound(HolderParams(3.0, 0.5, 2.0, 1e-12)) == pytest.approx(8.0, rel=1e-9)


def test_lemma_bound_planar_three_space_inputs():
    # A = 3e4, gamma = 1/5, C = 8, lambda = 1: 4 * 8 * (1.2e5)^5 * 2^2, exact in integers
    exact = 4 * 8 * 120000 ** 5 * 4
    hp = HolderParams(3e4, 0.2, 8.0, 1.0)
    assert lemma_bound(hp) == pytest.approx(float(exact), rel=1e-13)
    assert log_lemma_bound(hp) == pytest.approx(math.log(exact), rel=1e-14)


def test_lemma_bound_overflow_is_inf():
    assert lemma_bound(HolderParams(1e6, 0.01, 1.0, 50.0)) == math.inf


pos = st.floats(1.0, 1e3)


@given(pos, st.floats(0.05, 1.0), st.floats(0.1, 1e3), st.floats(0.1, 5.0), st.floats(1.01, 2.0))
def test_lemma_bound_monotone(A, g, C, lam, f):
    base = log_lemma_bound(HolderParams(A, g, C, lam))
    assert log_lemma_bound(HolderParams(A * f, g, C, lam)) >= base
    assert log_lemma_bound(HolderParams(A, g, C * f, lam)) >= base
    assert log_lemma_bound(HolderParams(A, g, C, lam * f)) >= base
    assume(g * f <= 1.0)
    assert log_lemma_bound(HolderParams(A, g * f, C, lam)) <= base


@pytest.mark.parametrize("kw", [dict(A=0.5), dict(gamma=0.0), dict(gamma=1.5), dict(C_growth=0.0),
                                dict(lambda_=0.0)])
def test_holder_params_invariants(kw):
    base = dict(A=1.0, gamma=0.5, C_growth=1.0, lambda_=1.0)
    base.update(kw)
    with pytest.raises(ConstantsError):
        HolderParams(**base)


def test_holder_constants():
    assert HOLDER_C == 1e4 and HOLDER_GAMMA == 0.2
    assert holder_bound(1 - 1e-15, 2, 2) == pytest.approx(2e4)
    assert holder_bound(1e-5, 2, 2) == pytest.approx(2000.0)
    assert holder_bound(0.5, 3, 2) < holder_bound(0.5, 2, 2)
    with pytest.raises(ConstantsError):
        holder_bound(1.0, 2, 2)


def test_mild_growth():
    assert mild_growth_params(2, 4) == (16.0, 2.0)
    assert mild_growth_params(2, 3) == (8.0, 1.0)
    with pytest.raises(ConstantsError, match="barrier exponent nonpositive"):
        mild_growth_params(3, 3)


def test_barrier_levels():
    z = np.array([0.5, 0.0, 0.0])
    assert barrier_eval(z + [3.0, 0, 0], z, 1.0) == pytest.approx(0.0)
    assert barrier_eval(np.zeros(3), z, 1.0) == pytest.approx(1.0)
    with pytest.raises(ConstantsError):
        barrier_eval(z, z, 1.0)


@given(st.floats(0.1, 2.9), st.floats(0.0, 2 * math.pi))
def test_barrier_range(r, t):
    z = np.array([0.1, 0.0])
    assume(r >= 0.1)
    x = z + r * np.array([math.cos(t), math.sin(t)])
    v = barrier_eval(x, z, 1.0)
    assert -1e-12 <= v <= 1 + 1e-12


@pytest.mark.parametrize("p,d", [(2, 3), (1.5, 4), (3, 10)])
def test_radial_residual_zero(p, d):
    lam = (d - p) / (p - 1)
    r = np.linspace(0.1, 3, 30)
    assert np.max(np.abs(radial_residual(r, lam, p, d) * r ** (lam + 2))) < 1e-8
    assert np.max(np.abs(radial_residual(r, lam + 0.5, p, d))) > 1e-3


def test_h5_values():
    v = harnack_H5(2, 3)
    direct = math.log(4 * 8) + 1 * (math.log(4 * 3e4) / 0.2 + 2 * math.log(2))
    assert v == pytest.approx(direct, rel=1e-14)
    assert v > 0
    assert harnack_H5(2, 4) > harnack_H5(2, 3)


def test_h5_growth_shape():
    ratios = []
    for d in (10, 20, 40, 80):
        x = d / 1.0
        ratios.append(harnack_H5(2, d) / (x * math.log(x)))
    assert max(ratios) / min(ratios) < 3


def test_chain_examples():
    ch = chain_construct(np.zeros(2), 5.0)
    assert len(ch) == 1 and ch[0][1] == 5.0
    ch = chain_construct(np.array([0.5, 0.0]), 2.0)
    assert len(ch) == 2
    assert ch[1][1] == pytest.approx(1.875)
    assert np.linalg.norm(ch[1][0]) == pytest.approx(0.125)
    with pytest.raises(ConstantsError):
        chain_construct(np.zeros(2), 1.0)


@given(st.floats(1.01, 50.0), st.floats(0.0, 0.999))
def test_chain_invariants(R, r0):
    ch = chain_construct(np.array([r0, 0.0]), R)
    for (x, dn) in ch:
        assert abs(np.linalg.norm(x) + dn - R) < 1e-9 * R
    for (_, a), (_, b) in zip(ch, ch[1:]):
        assert b == pytest.approx(1.25 * a)
    assert np.linalg.norm(ch[-1][0]) <= R / 5 + 1e-9
    assert len(ch) - 1 <= math.ceil(chain_length_bound(R))


def test_general_R():
    big = [harnack_general_R(R, 2, 3) for R in (5, 50, 500, 5e6)]
    assert all(a > b > 0 for a, b in zip(big, big[1:]))
    lo, hi = harnack_general_R_branches(5.0, 2, 3)
    assert abs(lo - hi) < math.log(2.0) + abs(math.log(5 / 4)) * 100 or 0.5 < lo / hi < 2
    assert harnack_general_R(1.01, 2, 3) > harnack_general_R(4.99, 2, 3)


def test_compare_methods():
    r = compare_methods(2, 100)
    assert r.s1 == pytest.approx(100 * math.log(100))
    assert r.s2 == 1e4
    assert r.ordering == "paper<lps<moser"
    assert r.meaningful
    assert not compare_methods(2, 2).meaningful
    assert crossover_dimension(2) is not None


@given(st.floats(1.05, 10.0), st.integers(2, 300))
def test_s1_below_s2(p, d):
    s1, s2, _ = shapes(p, d)
    if d / (p - 1) >= math.e:
        assert s1 <= s2


def test_constant_report_rows():
    rows = constant_report([3.0], [3], [5.0])
    assert math.isnan(rows[0]["log_bound_paper"])
    assert "barrier exponent nonpositive" in rows[0]["note"]
    rows = constant_report([2.0], [5], [1.5, 50.0])
    assert all(math.isfinite(r["log_bound_paper"]) for r in rows)


def field_of(fn, radius=2.0, h=0.05):
    lo, shape = lattice(h, 2, radius)
    f = GridField(h, lo, np.zeros(shape), radius=radius)
    f.values = fn(f.coords())
    return f


def test_doubling_constant_field():
    f = field_of(lambda x: np.full(x.shape[:-1], 3.0))
    out = doubling_diagnostic(f, HolderParams(1, 1, 1, 1))
    assert out["first_failure"] == 1
    assert all(m == 3.0 for m in out["M"])


def test_doubling_harmonic_field():
    f = field_of(lambda x: 2 + x[..., 0] / 2)
    out = doubling_diagnostic(f, HolderParams(1, 1, 1, 1))
    assert out["first_failure"] is not None and out["first_failure"] <= 2
    assert out["bounded"]
    assert max(out["M"]) <= out["sup_field"]
