"""Command-line experiment runner.

Each subcommand reads its parameters from flags and/or a JSON config file
(flags win), writes its outputs into ``--out`` and returns 0 on success, 1
when a verification fails and 2 on a usage error.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import warnings

import numpy as np

from . import __version__
from . import io as tio

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2

# subcommand -> parameter defaults (``None``: required)
DEFAULTS = {
    "solve": {"p": None, "d": 2, "eps": None, "boundary": "cos", "h": None, "tol": None,
              "method": "dpp", "fd_h": None, "max_iter": 1_000_000},
    "couple": {"p": 3.0, "d": 3, "eps": 0.005, "theta0": 0.05, "beta": 0.1, "trials": 300,
               "n_max": 100_000, "alignment_configs": 100, "alignment_samples": 20_000,
               "spread": 0.3},
    "constants": {"p": [1.5, 2.0, 3.0], "d": list(range(2, 11)), "R": [1.5, 5.0, 50.0]},
    "planar": {"p": [6.0, 3.0, 2.0, 1.5], "eps": 0.04, "trials": 10_000, "cap": 200_000,
               "fuzz": 10_000, "adversaries": ["pull_away", "random"]},
    "compare": {"p": [2.0], "d_min": 8, "d_max": 200},
    "chain": {"fuzz": 10_000, "chain": None},
}

# parameters that do not change results and are kept out of the config hash
NON_RESULT = ("workers", "out")


class UsageError(Exception):
    pass


def _floats(s):
    return [float(v) for v in s.split(",")]


def _ints(s):
    out = []
    for part in s.split(","):
        if ".." in part:
            a, b = part.split("..")
            out.extend(range(int(a), int(b) + 1))
        else:
            out.append(int(part))
    return out


def _strs(s):
    return [v for v in s.split(",") if v]


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(message)


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=None)
    common.add_argument("--workers", type=int, default=None)
    common.add_argument("--out", default=None, help="output directory (default: out)")
    common.add_argument("--config", default=None, help="JSON file; flags override its values")

    ap = _Parser(prog="tugharnack", description="Tug-of-war with noise experiments.")
    ap.add_argument("--version", action="version", version=__version__)
    sub = ap.add_subparsers(dest="command", parser_class=_Parser)

    s = sub.add_parser("solve", parents=[common], help="DPP value (and FD reference)")
    s.add_argument("--p", type=float)
    s.add_argument("--d", type=int)
    s.add_argument("--eps", type=float)
    s.add_argument("--boundary")
    s.add_argument("--h", type=float)
    s.add_argument("--tol", type=float)
    s.add_argument("--method", choices=["dpp", "fd", "both"])
    s.add_argument("--fd-h", dest="fd_h", type=float)
    s.add_argument("--max-iter", dest="max_iter", type=int)

    c = sub.add_parser("couple", parents=[common], help="coupled-process verification")
    c.add_argument("--p", type=float)
    c.add_argument("--d", type=int)
    c.add_argument("--eps", type=float)
    c.add_argument("--theta0", type=float)
    c.add_argument("--beta", type=float)
    c.add_argument("--trials", type=int, help="coupled pairs per adversary")
    c.add_argument("--n-max", dest="n_max", type=int)
    c.add_argument("--alignment-configs", dest="alignment_configs", type=int)
    c.add_argument("--alignment-samples", dest="alignment_samples", type=int)
    c.add_argument("--spread", type=float)

    k = sub.add_parser("constants", parents=[common], help="Harnack constant report")
    k.add_argument("--p", type=_floats)
    k.add_argument("--d", type=_ints, help="e.g. 2..10 or 2,3,5")
    k.add_argument("--R", type=_floats)

    pl = sub.add_parser("planar", parents=[common], help="planar loop experiment")
    pl.add_argument("--p", type=_floats)
    pl.add_argument("--eps", type=float)
    pl.add_argument("--trials", type=int)
    pl.add_argument("--cap", type=int)
    pl.add_argument("--fuzz", type=int)
    pl.add_argument("--adversaries", type=_strs)

    cm = sub.add_parser("compare", parents=[common], help="constant-shape comparator")
    cm.add_argument("--p", type=_floats)
    cm.add_argument("--d-min", dest="d_min", type=int)
    cm.add_argument("--d-max", dest="d_max", type=int)

    ch = sub.add_parser("chain", parents=[common], help="verify a rectangle chain")
    ch.add_argument("--fuzz", type=int)
    ch.add_argument("--chain", help="chain JSON (default: built-in chain)")
    return ap


def resolve_config(command, ns):
    """Defaults, then the config file, then explicit flags."""
    cfg = dict(DEFAULTS[command])
    cfg.update({"seed": 0, "workers": 1, "out": "out"})
    if ns.config:
        try:
            with open(ns.config) as fh:
                file_cfg = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise UsageError(f"cannot read config: {exc}") from exc
        unknown = set(file_cfg) - set(cfg)
        if unknown:
            raise UsageError(f"unknown config keys: {sorted(unknown)}")
        cfg.update(file_cfg)
    for key in cfg:
        v = getattr(ns, key, None)
        if v is not None:
            cfg[key] = v
    missing = [k for k in _REQUIRED.get(command, ()) if cfg[k] is None]
    if missing:
        raise UsageError(f"missing required parameter(s): {', '.join('--' + m for m in missing)}")
    return cfg


_REQUIRED = {"solve": ("p",)}


def result_config(command, cfg):
    out = {k: v for k, v in cfg.items() if k not in NON_RESULT}
    out["command"] = command
    return out


def _path(cfg, name):
    return os.path.join(cfg["out"], name)


# -- subcommands ----------------------------------------------------------------

def cmd_solve(cfg):
    from .boundary import from_name
    from .dpp import solve
    from .fd import FdProblem, cross_validate, solve_plaplace
    from .game import GameConfig

    p, d = float(cfg["p"]), int(cfg["d"])
    eps = cfg["eps"]
    method = cfg["method"]
    rc = result_config("solve", cfg)
    bnd = from_name(cfg["boundary"], d)
    summary = {"p": p, "d": d, "boundary": bnd.describe()}
    field = None
    if method in ("dpp", "both"):
        if eps is None:
            raise UsageError("--eps is required for the DPP solver")
        gcfg = GameConfig(p, d, float(eps), bnd, seed=cfg["seed"])
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            field = solve(gcfg, h=cfg["h"], tol=cfg["tol"], max_iter=int(cfg["max_iter"]))
        for w in caught:
            print(f"warning: {w.message}", file=sys.stderr)
        tio.write_field_binary(_path(cfg, "dpp_field.bin"), field, rc)
        tio.write_field_csv(_path(cfg, "dpp_field.csv"), field, rc)
        hist = field.meta["history"]
        tio.write_table(_path(cfg, "dpp_convergence.csv"), ["iteration", "residual"],
                        [[i + 1, r] for i, r in enumerate(hist)], rc)
        summary["dpp"] = {k: field.meta[k] for k in ("iterations", "residual", "tol", "status", "h")}
        summary["dpp"]["value_at_origin"] = float(np.ravel(field(np.zeros(d)))[0])
    if method in ("fd", "both"):
        if d != 2:
            raise UsageError("the FD reference is planar (d = 2)")
        fh = cfg["fd_h"] or (cfg["h"] if cfg["h"] else 0.02)
        fd = solve_plaplace(FdProblem(p, float(fh), bnd))
        tio.write_field_binary(_path(cfg, "fd_field.bin"), fd, rc)
        tio.write_field_csv(_path(cfg, "fd_field.csv"), fd, rc)
        tio.write_table(_path(cfg, "fd_convergence.csv"), ["iteration", "residual"],
                        [[i, r] for i, r in enumerate(fd.meta["history"])], rc)
        summary["fd"] = {k: fd.meta[k] for k in ("iterations", "residual", "status", "h")}
        if field is not None:
            field.meta["boundary_key"] = bnd.key
            summary["cross_validation"] = cross_validate(field, fd, margin=0.3)
    tio.write_json(_path(cfg, "solve_summary.json"), summary, rc)
    print(f"solve: wrote outputs to {cfg['out']}")
    return EXIT_OK


def cmd_couple(cfg):
    from .boundary import Constant
    from .coupling import (CouplingError, CouplingParams, combine, random_aligned_configuration,
                           run_battery, verify_alignment_inequality, verify_decrements,
                           verify_unbiased)
    from .game import GameConfig
    from .rng import stream

    try:
        params = CouplingParams(theta0=float(cfg["theta0"]), beta=float(cfg["beta"]))
    except CouplingError as exc:
        raise UsageError(str(exc)) from exc
    gcfg = GameConfig(float(cfg["p"]), int(cfg["d"]), float(cfg["eps"]), Constant(0.0),
                      seed=cfg["seed"])
    rc = result_config("couple", cfg)
    runs = run_battery(gcfg, params, int(cfg["trials"]), seed=cfg["seed"],
                       workers=cfg["workers"], spread=float(cfg["spread"]),
                       n_max=int(cfg["n_max"]))
    resolved = params.resolve(gcfg)
    report = {"params": {"theta0": resolved.theta0, "beta": resolved.beta, "eta": resolved.eta,
                         "C_lyap": resolved.C_lyap}, "adversaries": {}}
    verdicts = []
    for name, traces in runs.items():
        dec = verify_decrements(traces, resolved, gcfg.eps)
        unb = verify_unbiased(traces)
        report["adversaries"][name] = {"steps": int(sum(t.steps for t in traces)),
                                       "decrements": dec, "unbiased": unb}
        verdicts += [dec["verdict"], unb["verdict"]]
    align = []
    if gcfg.d >= 3 and int(cfg["alignment_configs"]) > 0:
        for i in range(int(cfg["alignment_configs"])):
            rng = stream(cfg["seed"], 0xA1, i)
            U, V, Z = random_aligned_configuration(gcfg.d, resolved.theta0, rng, eps=gcfg.eps)
            align.append(verify_alignment_inequality(U, V, Z, gcfg, int(cfg["alignment_samples"]),
                                                     rng, resolved))
        verdicts.append(combine([a["verdict"] for a in align]))
    report["alignment"] = {"configs": align,
                           "verdict": combine([a["verdict"] for a in align]) if align else "SKIPPED"}
    report["verdict"] = combine(verdicts)
    tio.write_json(_path(cfg, "couple_report.json"), report, rc)
    first = next(iter(runs.values()))
    if first:
        tio.write_coupled_csv(_path(cfg, "coupled_trace.csv"), first[:1], rc)
    print(f"couple: {report['verdict']}")
    if report["verdict"] == "INDETERMINATE":
        print("warning: too few samples for a definite verdict", file=sys.stderr)
    return EXIT_FAIL if report["verdict"] == "FAIL" else EXIT_OK


def cmd_constants(cfg):
    from .constants import constant_report
    rows = constant_report(cfg["p"], cfg["d"], cfg["R"])
    tio.write_constant_report(_path(cfg, "constants.csv"), rows, result_config("constants", cfg))
    print(f"constants: {len(rows)} rows")
    return EXIT_OK


def cmd_compare(cfg):
    from .constants import compare_methods
    rows = []
    bad = 0
    for p in cfg["p"]:
        for d in range(int(cfg["d_min"]), int(cfg["d_max"]) + 1):
            r = compare_methods(float(p), d)
            rows.append({"p": r.p, "d": r.d, "x": r.x, "s1": r.s1, "s2": r.s2, "log_s3": r.log_s3,
                         "ordering": r.ordering, "meaningful": r.meaningful})
            if r.meaningful and r.ordering != "paper<lps<moser":
                bad += 1
    cols = ["p", "d", "x", "s1", "s2", "log_s3", "ordering", "meaningful"]
    tio.write_table(_path(cfg, "compare.csv"), cols, rows, result_config("compare", cfg))
    verdict = "FAIL" if bad else "PASS"
    print(f"compare: {verdict} ({bad} rows out of order)")
    return EXIT_FAIL if bad else EXIT_OK


def _chain_report(cfg, chain, rc):
    from .planar import verify_chain
    rep = verify_chain(chain, n_fuzz=int(cfg["fuzz"]), seed=cfg["seed"])
    tio.write_chain(_path(cfg, "chain.json"), chain, rc)
    tio.write_json(_path(cfg, "chain_report.json"), rep, rc)
    print(f"chain: {rep['verdict']}" + (f" ({', '.join(rep['failed'])})" if rep["failed"] else ""))
    return rep


def cmd_chain(cfg):
    from .planar import default_rect_chain
    chain = tio.read_chain(cfg["chain"]) if cfg["chain"] else default_rect_chain()
    rep = _chain_report(cfg, chain, result_config("chain", cfg))
    return EXIT_FAIL if rep["verdict"] == "FAIL" else EXIT_OK


def planar_verdict(experiments, min_r2=0.9):
    """Scaling check: ``p_hat`` decreasing in ``1/(p-1)`` and a log-linear fit."""
    from .planar import PlanarError, fit_planar_constant
    exps = sorted(experiments, key=lambda e: 1.0 / (e.p - 1.0))
    ph = [e.p_hat for e in exps]
    monotone = all(a > b for a, b in zip(ph, ph[1:]))
    out = {"p_hat_by_increasing_inverse_p_minus_1": ph, "monotone": monotone}
    if any(not e.reliable for e in exps):
        out.update(verdict="INDETERMINATE", notice="unreliable (capped) experiment")
        return out
    try:
        C, r2 = fit_planar_constant(exps)
    except PlanarError as exc:
        out.update(verdict="FAIL", notice=str(exc))
        return out
    out.update(C_hat=C, r2=r2, verdict="PASS" if monotone and r2 >= min_r2 else "FAIL")
    return out


def cmd_planar(cfg):
    from .planar import default_rect_chain, estimate_loop_probability
    rc = result_config("planar", cfg)
    chain = default_rect_chain()
    rep = _chain_report(cfg, chain, rc)
    exps = []
    for p in cfg["p"]:
        e = estimate_loop_probability(float(p), float(cfg["eps"]), int(cfg["trials"]), chain,
                                      seed=cfg["seed"], adversaries=tuple(cfg["adversaries"]),
                                      cap=int(cfg["cap"]), workers=cfg["workers"])
        exps.append(e)
        if not e.reliable:
            print(f"warning: p={p}: step cap reached in most trials; flagged unreliable",
                  file=sys.stderr)
    tio.write_experiments(_path(cfg, "planar_experiments.csv"), exps, rc)
    per = [{"p": e.p, "adversary": a, **v} for e in exps for a, v in sorted(e.per_adversary.items())]
    fit = planar_verdict(exps) if len(exps) >= 3 else {"verdict": "INDETERMINATE",
                                                       "notice": "fewer than three values of p"}
    tio.write_json(_path(cfg, "planar_fit.json"), {"fit": fit, "per_adversary": per,
                                                   "chain_verdict": rep["verdict"]}, rc)
    print(f"planar: chain {rep['verdict']}, scaling {fit['verdict']}")
    if rep["verdict"] == "FAIL" or fit["verdict"] == "FAIL":
        return EXIT_FAIL
    return EXIT_OK


COMMANDS = {"solve": cmd_solve, "couple": cmd_couple, "constants": cmd_constants,
            "planar": cmd_planar, "compare": cmd_compare, "chain": cmd_chain}


def main(argv=None):
    parser = build_parser()
    try:
        ns = parser.parse_args(argv)
        if ns.command is None:
            parser.print_usage(sys.stderr)
            raise UsageError("a subcommand is required")
        cfg = resolve_config(ns.command, ns)
        if int(cfg["workers"]) < 1:
            raise UsageError("--workers must be at least 1")
        os.makedirs(cfg["out"], exist_ok=True)
        with open(_path(cfg, "config.json"), "w") as fh:
            fh.write(tio.canonical_json(result_config(ns.command, cfg), indent=2) + "\n")
        return COMMANDS[ns.command](cfg)
    except UsageError as exc:
        print(f"tugharnack: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ValueError, RuntimeError) as exc:
        print(f"tugharnack: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
