"""Command-line experiment driver.

    decaylab <task> [--config PATH] [--seed N] [--out DIR] [--threads N]

Tasks: envelope, simulate, compare, observability, lemmas, seqlab, config.
Exit codes: 0 pass, 1 check failure, 2 config error, 3 numerical failure.
Outputs are deterministic for a given config and seed.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import os
import sys
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from ._errors import ConfigError, DomainError, NumericalFailure
from .config import ExperimentConfig, example_text
from .damping import CoefficientField
from .obscheck import (check_A2, check_A3, check_lemma_kinetic,
                       check_lemma_linear_vs_nonlinear, check_lemma_phiz, deterministic_suite,
                       fit_exponential_observability, k_T_constant, random_suite)
from .seqlab import (check_chain, discretcont_bound, power_family_instance, random_instance,
                     saturating_sequence)
from .wavesim import (WaveConfig, WaveState, energy_identity_residual, solve, write_snapshot,
                      write_trace_csv)
from .weight import DecayEnvelope, GrowthSpec

log = logging.getLogger("decaylab")

EXIT_PASS, EXIT_FAIL, EXIT_CONFIG, EXIT_NUMERIC = 0, 1, 2, 3


# -- output helpers ---------------------------------------------------------------


def _clean(obj):
    if isinstance(obj, (np.floating, float)):
        obj = float(obj)
        return obj if math.isfinite(obj) else None
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple, np.ndarray)):
        return [_clean(v) for v in obj]
    return obj


def _write_json(path, payload):
    with open(path, "w") as fh:
        json.dump(_clean(payload), fh, indent=2, sort_keys=True)
        fh.write("\n")


def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    return repr(float(v))


def _write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(header)
        for row in rows:
            wr.writerow([_fmt(v) for v in row])


def _write_gnuplot(path, data, title, columns, logx=True, logy=True):
    lines = [
        "# gnuplot script",
        "set datafile separator ','",
        "set key autotitle columnhead",
        f"set title '{title}'",
        "set xlabel 't'",
    ]
    if logx:
        lines.append("set logscale x")
    if logy:
        lines.append("set logscale y")
    plots = [f"'{data}' using 1:{c} with lines" for c in columns]
    lines.append("plot " + ", \\\n     ".join(plots))
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def _law_field(cfg):
    law, fld = cfg.build_law()
    return law, (fld if fld is not None else CoefficientField())


# -- tasks -------------------------------------------------------------------------


def _closed_form(law, gs, t):
    """Reference shape: power law rate, or the logarithmic rate for exponential H."""
    if gs.family == "exp":
        b = gs.p.get("beta", 0.5)
        return np.log1p(t) ** (-2.0 * b), f"(ln(1+t))^-{2 * b:g}"
    if law.family == "power" and gs.kind != "H_for_A3":
        p = law.params["p"]
        if gs.family == "constant":
            return (1.0 / (1.0 + t)) ** (2.0 / (p - 1.0)), f"(1+t)^-{2 / (p - 1):g}"
        a = (p - 1.0) / 2.0
        from ._numerics import bisect_increasing

        def log_phi(x):
            return a * np.log(x) + gs.log_G_theta(x)
        x = bisect_increasing(log_phi, -np.log1p(t), 1e-300, 1.0, geometric=True, check=False)
        return np.asarray(x), "(x^((p-1)/2) G_theta)^-1(1/(1+t))"
    return np.full_like(t, np.nan), "none"


def run_envelope(cfg, out, threads=1):
    law, _ = _law_field(cfg)
    gs = cfg.build_growth()
    e = cfg.envelope
    t = np.geomspace(e.t_min, e.t_max, e.points)
    g_main = gs if gs.kind != "H_for_A3" else GrowthSpec.constant(theta=gs.theta)
    g_bis = gs if gs.kind != "G_for_A2" else GrowthSpec.identity(theta=gs.theta)
    common = dict(law=law, T=e.T, T0=e.T0, r=e.r, eta=e.eta, beta=e.beta)
    est_main = DecayEnvelope(growth=g_main, theorem="main", **common).fit()
    est_bis = DecayEnvelope(growth=g_bis, theorem="mainbis", **common).fit()
    m, vm = est_main.predict_with_validity(t)
    b, vb = est_bis.predict_with_validity(t)
    primary, valid = (m, vm) if e.theorem == "main" else (b, vb)
    closed, label = _closed_form(law, gs, t)
    ratio = primary / closed
    slope = np.full_like(t, np.nan)
    idx = np.flatnonzero(valid)
    if idx.size >= 2:
        slope[idx] = np.gradient(np.log(primary[idx]), np.log(t[idx]))
    rows = zip(t, m, b, closed, ratio, slope, valid)
    os.makedirs(out, exist_ok=True)
    _write_csv(os.path.join(out, "envelope.csv"),
               ["t", "envelope_main", "envelope_mainbis", "closed_form", "ratio", "slope", "valid"],
               rows)
    fit_slope = math.nan
    if idx.size >= 2:
        fit_slope = float(np.polyfit(np.log(t[idx]), np.log(primary[idx]), 1)[0])
    r = ratio[valid & np.isfinite(ratio)]
    summary = {
        "theorem": e.theorem,
        "closed_form": label,
        "threshold_main": est_main.threshold_,
        "threshold_mainbis": est_bis.threshold_,
        "fitted_loglog_slope": fit_slope,
        "ratio_min": float(r.min()) if r.size else None,
        "ratio_max": float(r.max()) if r.size else None,
        "valid_points": int(valid.sum()),
    }
    _write_json(os.path.join(out, "envelope.json"), summary)
    _write_gnuplot(os.path.join(out, "envelope.gp"), "envelope.csv", "decay envelopes", [2, 3, 4])
    return EXIT_PASS, summary


def _simulate(cfg, kind=None):
    law, fld = _law_field(cfg)
    s = cfg.simulation
    wc = WaveConfig(N=s.N, T_final=s.T_final, dt=s.dt, kind=kind or s.kind, scheme=s.scheme,
                    law=law, field=fld, stride=s.stride, cfl=s.cfl, keep_frames=s.snapshot)
    init = WaveState.from_modes(s.N, s.w_modes, s.v_modes)
    return solve(wc, init, growth=cfg.build_growth())


def run_simulate(cfg, out, threads=1):
    traj = _simulate(cfg)
    os.makedirs(out, exist_ok=True)
    write_trace_csv(traj.trace, os.path.join(out, "trace.csv"))
    if cfg.simulation.snapshot:
        write_snapshot(traj, os.path.join(out, "snapshot.bin"))
    tr = traj.trace
    summary = {
        "kind": traj.config.kind,
        "scheme": traj.config.scheme,
        "N": traj.config.N,
        "dt": traj.config.dt,
        "steps": traj.config.n_steps,
        "E0": tr.energy[0],
        "E_final": tr.energy[-1],
        "energy_kind": tr.energy_kind,
        "energy_identity_residual": energy_identity_residual(tr),
        "step_halvings": traj.halvings,
    }
    _write_json(os.path.join(out, "simulate.json"), summary)
    _write_gnuplot(os.path.join(out, "simulate.gp"), "trace.csv", "energy and dissipation", [2, 3],
                   logx=False, logy=False)
    return EXIT_PASS, summary


def run_compare(cfg, out, threads=1):
    law, _ = _law_field(cfg)
    gs = cfg.build_growth()
    e = cfg.envelope
    traj = _simulate(cfg, kind="nonlinear_damped")
    tr = traj.trace
    est = DecayEnvelope(law=law, growth=gs, theorem=e.theorem, T=e.T, T0=e.T0, r=e.r,
                        eta=e.eta, beta=e.beta).fit()
    env, valid = est.predict_with_validity(tr.times)
    os.makedirs(out, exist_ok=True)
    idx = np.flatnonzero(valid)
    if idx.size == 0:
        summary = {"verdict": False, "reason": "no sample past the validity threshold",
                   "threshold": est.threshold_}
        _write_json(os.path.join(out, "compare.json"), summary)
        return EXIT_FAIL, summary
    i0 = int(idx[0])
    C = float(tr.energy[i0] / env[i0])
    cal = C * env
    ok = np.where(valid, tr.energy <= cal * (1 + 1e-12), False)
    _write_csv(os.path.join(out, "compare.csv"), ["t", "E_sim", "envelope", "satisfied"],
               zip(tr.times, tr.energy, cal, ok))
    verdict = bool(np.all(ok[idx]))
    ratio = tr.energy[idx] / cal[idx]
    summary = {
        "theorem": e.theorem,
        "threshold": est.threshold_,
        "t_star": float(tr.times[i0]),
        "calibration_constant": C,
        "max_ratio_after_t_star": float(ratio.max()),
        "verdict": verdict,
        "statement": "E_sim <= envelope for all sampled t >= t_star",
        "energy_identity_residual": energy_identity_residual(tr),
    }
    _write_json(os.path.join(out, "compare.json"), summary)
    _write_gnuplot(os.path.join(out, "compare.gp"), "compare.csv", "simulated energy vs envelope",
                   [2, 3])
    return (EXIT_PASS if verdict else EXIT_FAIL), summary


def run_observability(cfg, out, threads=1):
    _, fld = _law_field(cfg)
    gs = cfg.build_growth()
    o = cfg.observability
    data = deterministic_suite(o.N, o.max_mode)
    rep = check_A3(fld, gs, o.T, data) if gs.kind == "H_for_A3" else check_A2(fld, gs, o.T, data)
    c_T, beta_obs, resid, degenerate = fit_exponential_observability(
        fld, o.T, tuple(o.beta_grid), tuple(o.mode_range), o.N)
    os.makedirs(out, exist_ok=True)
    rep.write_margins_csv(os.path.join(out, "margins.csv"))
    summary = {
        "report": rep.to_dict(),
        "exponential_fit": {"c_T": c_T, "beta_obs": beta_obs, "residual": resid,
                            "degenerate": degenerate, "note": "empirical estimate"},
    }
    _write_json(os.path.join(out, "observability.json"), summary)
    return (EXIT_PASS if rep.all_passed else EXIT_FAIL), summary


def _chain_summary(cfg, threads):
    rng = np.random.default_rng(cfg.seed)
    n = cfg.seqlab.n_steps
    insts = [random_instance(rng) for _ in range(cfg.seqlab.n_instances)]

    def one(inst):
        r = check_chain(inst, saturating_sequence(inst, n))
        return {"label": inst.label, "holds": r.holds, "first_violation": r.first_violation,
                "min_slack_E_euler": min(r.slack_E_euler) if r.slack_E_euler else None,
                "min_slack_euler_ode": min(r.slack_euler_ode) if r.slack_euler_ode else None,
                "truncated": r.truncated}

    with ThreadPoolExecutor(max_workers=max(1, threads)) as ex:
        results = list(ex.map(one, insts))
    return {"instances": len(results), "violations": sum(not r["holds"] for r in results),
            "results": results, "passed": all(r["holds"] for r in results)}


def _bound_summary():
    out = []
    for p, E0, rho_T in ((3.0, 0.1, 4.0), (5.0, 0.25, 5.0)):
        inst = power_family_instance(p, E0, rho_T, 10.0)
        rep = discretcont_bound(inst, saturating_sequence(inst, 200))
        out.append({"p": p, "E0": E0, "rho_T": rho_T, "T": inst.T,
                    "validity_threshold": rep.validity_threshold, "t_star": rep.t_star,
                    "max_ratio": rep.max_ratio, "holds_from_2T": rep.holds_on(2 * inst.T)})
    return {"cases": out, "passed": all(c["holds_from_2T"] for c in out)}


def run_seqlab(cfg, out, threads=1):
    summary = {"chain": _chain_summary(cfg, threads), "bound": _bound_summary()}
    os.makedirs(out, exist_ok=True)
    _write_json(os.path.join(out, "seqlab.json"), summary)
    ok = summary["chain"]["passed"] and summary["bound"]["passed"]
    return (EXIT_PASS if ok else EXIT_FAIL), summary


def run_lemmas(cfg, out, threads=1):
    from .weight import WeightSystem

    law, fld = _law_field(cfg)
    lm = cfg.lemmas
    data = deterministic_suite(lm.N, lm.max_mode) if lm.max_mode else []
    data += random_suite(lm.N, lm.n_random, seed=cfg.seed) if lm.n_random else []
    ws = WeightSystem(law, cfg.envelope.beta)
    checks = {
        "lemma_kinetic": lambda: check_lemma_kinetic(law, ws, fld, data, lm.T).to_dict(),
        "lemma_linear_vs_nonlinear": lambda: check_lemma_linear_vs_nonlinear(
            law, fld, data, lm.T).to_dict(),
        "lemma_phiz": lambda: check_lemma_phiz(fld, data, lm.T).to_dict(),
        "comparison_chain": lambda: _chain_summary(cfg, 1),
        "discretcont_bound": _bound_summary,
    }
    informational = {}
    if lm.self_test:
        informational["phiz_mutated_k_T_minus_1"] = lambda: check_lemma_phiz(
            fld, data, lm.T, k_T=k_T_constant(lm.T, fld) - 1.0).to_dict()

    def guarded(fn):
        try:
            return fn()
        except (DomainError, NumericalFailure, ConfigError) as exc:
            return {"passed": False, "error": f"{type(exc).__name__}: {exc}"}

    names = list(checks) + list(informational)
    fns = [checks.get(n) or informational[n] for n in names]
    with ThreadPoolExecutor(max_workers=max(1, threads)) as ex:
        results = dict(zip(names, ex.map(guarded, fns)))
    for r in results.values():
        if isinstance(r, dict) and "results" in r and "no_data" in r:
            r["summary"] = "no data" if r["no_data"] else ("pass" if r["passed"] else "fail")
    failed = [n for n in checks if not results[n].get("passed", False)]
    summary = {"checks": results, "failed": failed, "passed": not failed,
               "informational": sorted(informational), "no_data": not data}
    os.makedirs(out, exist_ok=True)
    _write_json(os.path.join(out, "lemmas.json"), summary)
    return (EXIT_PASS if not failed else EXIT_FAIL), summary


TASK_RUNNERS = {
    "envelope": run_envelope,
    "simulate": run_simulate,
    "compare": run_compare,
    "observability": run_observability,
    "lemmas": run_lemmas,
    "seqlab": run_seqlab,
}


# -- entry point -----------------------------------------------------------------------


def build_parser():
    parser = argparse.ArgumentParser(prog="decaylab", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="task", required=True)
    for name in list(TASK_RUNNERS) + ["config"]:
        p = sub.add_parser(name)
        p.add_argument("--config", help="YAML experiment file")
        p.add_argument("--seed", type=int, help="override the config seed")
        p.add_argument("--out", help="output directory (overrides the config)")
        p.add_argument("--threads", type=int, default=1, help="worker threads")
        p.add_argument("-v", "--verbose", action="store_true")
        if name == "config":
            p.add_argument("--example", action="store_true", help="print a commented example")
            p.add_argument("--check", action="store_true", help="validate and echo --config")
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        if args.task == "config":
            if args.example or not args.config:
                sys.stdout.write(example_text())
                return EXIT_PASS
            sys.stdout.write(ExperimentConfig.load(args.config).dumps())
            return EXIT_PASS
        cfg = ExperimentConfig.load(args.config) if args.config else ExperimentConfig()
        cfg.task = args.task
        if args.seed is not None:
            if args.seed < 0:
                raise ConfigError("seed must be nonnegative")
            cfg.seed = args.seed
        if args.out:
            cfg.out = args.out
        if args.threads < 1:
            raise ConfigError("--threads must be at least 1")
        cfg.validate()
        status, summary = TASK_RUNNERS[args.task](cfg, cfg.out, args.threads)
        log.info("task %s finished with status %d", args.task, status)
        verdict = "pass" if status == EXIT_PASS else "fail"
        print(f"{args.task}: {verdict} (outputs in {cfg.out})")
        return status
    except (ConfigError, DomainError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericalFailure as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
