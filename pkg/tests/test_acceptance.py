"""Acceptance criteria 1-8.

Each test records one PASS/FAIL line (shown in the terminal summary) and
then asserts its verdict.  The slow criteria run the full-size
experiments; expect the module to take on the order of ten minutes.
"""

import math
import os
import warnings

import numpy as np
import pytest

from tugharnack import constants as K
from tugharnack import dpp, fd
from tugharnack import io as tio
from tugharnack.boundary import Affine, Constant, from_name, positive_battery
from tugharnack.cli import main, planar_verdict
from tugharnack.coupling import (CouplingParams, combine, random_aligned_configuration,
                                 run_battery, verify_alignment_inequality, verify_decrements,
                                 verify_unbiased)
from tugharnack.game import GameConfig, noise
from tugharnack.planar import default_rect_chain, estimate_loop_probability, verify_chain
from tugharnack.rng import stream

pytestmark = pytest.mark.acceptance


def _record(acceptance, k, ok, detail):
    acceptance[k] = ("PASS" if ok else "FAIL", detail)
    print(f"criterion {k}: {'PASS' if ok else 'FAIL'}  {detail}")
    return ok


def test_criterion_1_closed_form_constants(acceptance):
    checks = {
        "lemma_bound(1,1,1,1)=64": K.lemma_bound(K.HolderParams(1, 1, 1, 1)) == 64.0,
        "mild_growth(2,4)=(16,2)": K.mild_growth_params(2, 4) == (16.0, 2.0),
        "holder constants": K.HOLDER_GAMMA == 0.2 and K.HOLDER_C == 1e4
        and math.isclose(K.holder_bound(0.5, 2, 2), 1e4 * 2 * 0.5 ** 0.2, rel_tol=1e-15),
    }
    worst = -math.inf
    for R in np.linspace(1.01, 20.0, 10):
        for r0 in np.linspace(0.0, 0.99, 10):
            n = K.chain_length(np.array([r0, 0.0]), R)
            worst = max(worst, n - K.chain_length_bound(R))
    checks["chain length <= 5 ln(R/(R-1)) on 100 points"] = worst <= 0
    ok = all(checks.values())
    _record(acceptance, 1, ok, f"{sum(checks.values())}/{len(checks)} checks; "
                                f"max(N - bound) = {worst:.3f}")
    assert ok, checks


def test_criterion_2_noise_law(acceptance):
    eps = 0.01
    n = 100_000
    worst_geom = 0.0
    worst_z = 0.0
    for d in (2, 3, 5, 10):
        cfg = GameConfig(2.0, d, eps, Constant(0.0))
        rng = stream(2, d)
        v = rng.normal(size=d)
        v *= eps / np.linalg.norm(v)
        w = noise(np.tile(v, (n, 1)), cfg, rng)
        worst_geom = max(worst_geom, float(np.max(np.abs(w @ v))) / eps,
                         float(np.max(np.abs(np.linalg.norm(w, axis=1) - cfg.R * eps))))
        # coordinates in an orthonormal basis of v-perp
        q, _ = np.linalg.qr(np.column_stack([v, np.eye(d)[:, : d - 1]]))
        c = w @ q[:, 1:]
        target = (cfg.R * eps) ** 2 / (d - 1)
        sq = c * c
        se = sq.std(axis=0, ddof=1) / math.sqrt(n)
        # for d = 2 the coordinate is +-R eps and the spread is pure round-off
        z = np.abs(sq.mean(axis=0) - target) / np.maximum(se, 1e-12 * target)
        worst_z = max(worst_z, float(z.max()))
    ok = worst_geom <= 1e-9 and worst_z <= 3.0
    _record(acceptance, 2, ok, f"max geometric error {worst_geom:.1e}; max |z| variance {worst_z:.2f}")
    assert ok


def test_criterion_3_dpp_anchors(acceptance):
    cfg_c = GameConfig(2.0, 2, 0.1, Constant(1.7))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        f = dpp.solve(cfg_c, h=0.05, max_iter=1)
    const_ok = bool(np.all(f.values[f.inside()] == 1.7))

    a = np.array([0.6, -0.8])
    aff_err = 0.0
    aff_ok = True
    for p in (1.5, 2.0, 4.0):
        cfg = GameConfig(p, 2, 0.05, Affine(a, 0.3))
        u = dpp.solve(cfg, h=0.025)
        x = u.coords()[u.inside()]
        err = float(np.max(np.abs(u.values[u.inside()] - (x @ a + 0.3))))
        bound = 2 * (cfg.R + 1) * cfg.eps * np.linalg.norm(a)
        aff_ok &= err <= bound
        aff_err = max(aff_err, err / bound)

    cfg = GameConfig(2.0, 2, 0.02, from_name("cos"))
    u = dpp.solve(cfg, h=0.005)
    u0 = abs(float(np.ravel(dpp.evaluate(u, np.zeros(2)))[0]))
    ref = fd.solve_plaplace(fd.FdProblem(2.0, 0.005, from_name("cos")))
    cv = fd.cross_validate(u, ref, 0.3)
    ok = const_ok and aff_ok and u0 <= 0.01 and cv["sup_diff"] <= 0.1
    _record(acceptance, 3, ok, f"constant exact={const_ok}; affine err/bound={aff_err:.3f}; "
                                f"|u(0)|={u0:.1e}; sup|u-u_fd| on |x|<=0.7 = {cv['sup_diff']:.4f}")
    assert ok


def test_criterion_4_coupling(acceptance):
    details = []
    verdicts = []
    for p in (1.5, 2.0, 3.0):
        cfg = GameConfig(p, 3, 0.005, Constant(0.0))
        par = CouplingParams(theta0=0.05, beta=0.1).resolve(cfg)
        runs = run_battery(cfg, par, 40, seed=4, n_max=100_000)
        traces = [t for ts in runs.values() for t in ts]
        steps = sum(t.steps for t in traces)
        dec = verify_decrements(traces, par, cfg.eps)
        unb = verify_unbiased(traces)
        align = []
        for i in range(100):
            rng = stream(4, 0xA1, int(p * 10), i)
            U, V, Z = random_aligned_configuration(3, par.theta0, rng, eps=cfg.eps)
            align.append(verify_alignment_inequality(U, V, Z, cfg, 20_000, rng, par)["verdict"])
        v = {"a": unb["verdict"], "b": combine(align),
             "c": next(c["verdict"] for c in dec["checks"] if c["name"] == "aligned_dZbeta"),
             "d": next(c["verdict"] for c in dec["checks"] if c["name"] == "unaligned_dZbeta"),
             "e": next(c["verdict"] for c in dec["checks"] if c["name"] == "all_dM")}
        v["steps"] = "PASS" if steps >= 100_000 else "FAIL"
        verdicts += list(v.values())
        details.append(f"p={p}: steps={steps} " + " ".join(f"{k}={s}" for k, s in v.items()
                                                           if k != "steps"))
    ok = combine(verdicts) == "PASS"
    _record(acceptance, 4, ok, "; ".join(details))
    assert ok


def test_criterion_5_harnack_on_fd_solutions(acceptance):
    battery = positive_battery()
    assert len(battery) == 20
    worst = {}
    ok = True
    classical = K.classical_harnack_ratio(1.0, 5.0, 2)
    for p in (1.5, 2.0, 3.0):
        bound = K.harnack_shape_bound(p, 2)
        ratios = []
        for F in battery:
            u = fd.solve_plaplace(fd.FdProblem(p, 0.05, F, radius=5.0))
            ratios.append(fd.harnack_ratio(u, 1.0))
        r = max(ratios)
        ok &= min(ratios) >= 1.0 and r <= bound
        if p == 2.0:
            ok &= r <= 1.5 * classical
        worst[p] = (r, bound)
    _record(acceptance, 5, ok, "; ".join(f"p={p}: max ratio {r:.3f} <= {b:.3g}" for p, (r, b) in worst.items())
            + f"; classical (1+r)/(1-r) at r=1/5: {classical:.3f}")
    assert ok


def test_criterion_6_method_comparator(acceptance):
    bad = [d for d in range(8, 201) if K.compare_methods(2.0, d).ordering != "paper<lps<moser"]
    ok = not bad
    _record(acceptance, 6, ok, f"s1<s2<s3 for p=2 on d=8..200; violations: {bad[:5]}")
    assert ok


@pytest.mark.xfail(strict=True, reason="loop probability against the pull-away adversary is "
                   "below the 1e4-trial resolution for p <= 3; see the decisions ledger")
def test_criterion_7_planar(acceptance):
    chain = default_rect_chain()
    rep = verify_chain(chain, n_fuzz=10_000, seed=0)
    exps = [estimate_loop_probability(p, 0.04, 10_000, chain=chain, seed=7)
            for p in (6.0, 3.0, 2.0, 1.5)]
    verdict = planar_verdict(exps)
    ok = rep["verdict"] == "PASS" and verdict["verdict"] == "PASS"
    worst = " ".join(f"p={e.p}:{e.successes}/{e.trials}({e.adversary})" for e in exps)
    rnd = " ".join(f"p={e.p}:{e.per_adversary['random']['p_hat']:.3f}" for e in exps)
    _record(acceptance, 7, ok, f"chain {rep['verdict']}; worst-adversary successes {worst}; "
                                f"scaling {verdict['verdict']} ({verdict.get('notice', '')}); "
                                f"random-adversary p_hat {rnd}")
    assert ok


CLI_RUNS = [
    ["solve", "--p", "2", "--eps", "0.2", "--method", "both", "--fd-h", "0.1"],
    ["couple", "--trials", "3", "--n-max", "2000", "--alignment-configs", "3",
     "--alignment-samples", "500", "--eps", "0.05"],
    ["constants"],
    ["compare"],
    ["chain", "--fuzz", "500"],
    ["planar", "--p", "6,3,2,1.5", "--trials", "100", "--cap", "20000", "--fuzz", "200"],
]


def test_criterion_8_determinism(acceptance, tmp_path):
    mismatched = []
    for args in CLI_RUNS:
        outs = []
        codes = []
        for w in (1, 2, 3):
            out = tmp_path / f"{args[0]}_{w}"
            codes.append(main(args + ["--seed", "11", "--workers", str(w), "--out", str(out)]))
            outs.append({f: (out / f).read_bytes() for f in sorted(os.listdir(out))})
        if len(set(codes)) != 1 or codes[0] == 2 or any(o != outs[0] for o in outs[1:]):
            mismatched.append(args[0])
    ok = not mismatched
    _record(acceptance, 8, ok, f"{len(CLI_RUNS)} subcommands x workers 1,2,3; mismatched: {mismatched}")
    assert ok
