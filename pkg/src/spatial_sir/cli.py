"""Command line entry point: ``spatial-sir {simulate,solve,lln,truncation,validate}``.

Every run writes ``config.yaml`` (the resolved configuration, master seed
included) into the output directory next to its results.  Exit status is 0
when everything passed, 1 when a check or pipeline failed, 2 for usage and
configuration errors; failures also leave ``error.json`` behind.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from . import experiments
from .agents import init_population, simulate
from .config import default_config_text, parse_config, validate
from .errors import ConfigurationError, SpatialSIRError, UsageError
from .geometry import operator_bound_constants
from .limit import apriori_check, pi_n, solve

SUBCOMMANDS = ("simulate", "solve", "lln", "truncation", "validate")


def _write_text(path, text):
    with open(path, "w", newline="") as fh:
        fh.write(text)


def run_simulate(cfg, out_dir, workers=1):
    sim = cfg.simulation
    pop = init_population(cfg.density, cfg.infectivity, int(sim["N"]), cfg.gamma, cfg.seed)
    M = sim["truncation"]
    log, traj = simulate(pop, cfg.infectivity, cfg.kernel, float(sim["T"]),
                         truncation=None if M is None else float(M), event_budget=sim["event_budget"])
    log.write_csv(os.path.join(out_dir, "events.csv"))
    lines = ["time,S,I,R"] + [f"{float(t)!r},{s},{i},{r}" for t, (s, i, r) in zip(traj.times, traj.counts)]
    _write_text(os.path.join(out_dir, "trajectory.csv"), "\n".join(lines) + "\n")
    return 0


def _solve(cfg):
    sol = cfg.solver
    return solve(cfg.model(), cfg.infectivity, cfg.gamma, cfg.solver_radius, float(sol["dt"]),
                 float(cfg.simulation["T"]), sol["scheme"])


def run_solve(cfg, out_dir, workers=1):
    fields = _solve(cfg)
    n_steps = len(fields.times) - 1
    stride = max(1, n_steps // (int(cfg.experiment["t_points"]) - 1))
    fields.to_csv(os.path.join(out_dir, "fields.csv"), stride=stride)
    report = apriori_check(fields)
    lines = ["t,s_margin,f_margin"] + [f"{float(t)!r},{float(a)!r},{float(b)!r}"
                                      for t, a, b in zip(fields.times[::stride], report.s_margin[::stride],
                                                         report.f_margin[::stride])]
    _write_text(os.path.join(out_dir, "apriori.csv"), "\n".join(lines) + "\n")
    return 0


def run_lln(cfg, out_dir, workers=1):
    report = experiments.lln_experiment(cfg, workers=workers)
    experiments.emit_report(report, out_dir)
    return 0


def run_truncation(cfg, out_dir, workers=1):
    report = experiments.truncation_experiment(cfg, workers=workers)
    experiments.emit_report(report, out_dir)
    return 0


def validation_checks(cfg):
    """Invariant suite on the configured instance; list of ``(name, passed, detail)``."""
    checks = []
    sim = cfg.simulation
    T = float(sim["T"])
    N = int(sim["N"])

    pop = init_population(cfg.density, cfg.infectivity, N, cfg.gamma, cfg.seed)
    log, traj = simulate(pop, cfg.infectivity, cfg.kernel, T, event_budget=sim["event_budget"])
    counts = traj.counts
    checks.append(("simulation conserves N", bool((counts.sum(axis=1) == N).all()), f"events={log.n_events}"))
    mono = bool((np.diff(counts[:, 0]) <= 0).all() and (np.diff(counts[:, 2]) >= 0).all())
    checks.append(("S non-increasing, R non-decreasing", mono, ""))
    F_mass = traj.pairing("F", np.linspace(0.0, T, 51))
    checks.append(("infectivity mass below cap", bool((F_mass <= cfg.infectivity.cap * (1 + 1e-12)).all()),
                   f"max={float(F_mass.max())!r}"))
    log2, _ = simulate(init_population(cfg.density, cfg.infectivity, N, cfg.gamma, cfg.seed),
                       cfg.infectivity, cfg.kernel, T, event_budget=sim["event_budget"])
    same = bool(np.array_equal(log.event_time, log2.event_time) and np.array_equal(log.event_individual, log2.event_individual))
    checks.append(("simulation deterministic", same, ""))

    fields = _solve(cfg)
    drift = fields.conservation_drift()
    checks.append(("solver conserves S+I+R", drift <= 1e-9, f"drift={drift!r}"))
    nonneg = bool(min(fields.S.min(), fields.I.min(), fields.R.min(), fields.F.min()) >= 0)
    checks.append(("solver fields non-negative", nonneg, ""))
    try:
        rep = apriori_check(fields)
        checks.append(("a priori bounds", True, f"C_hat={rep.C_hat!r}"))
    except SpatialSIRError as exc:
        checks.append(("a priori bounds", False, str(exc)))

    model = cfg.model()
    top = cfg.ladder[-1]
    checks.append(("truncation discrepancy vanishes at gamma=0",
                   pi_n(model, 0.0, cfg.ladder[0], cfg.ladder[0] + cfg.kernel.support) == 0.0, ""))
    if cfg.density.envelope_ok:
        lam_sum, om_sum = model.operator_sums(cfg.gamma, top)
        lam_c, om_c = operator_bound_constants(cfg.kernel, cfg.density, cfg.gamma)
        ok = bool(np.isfinite([lam_sum, om_sum]).all() and lam_sum <= lam_c and om_sum <= om_c)
        checks.append(("operator sums below bound constants", ok,
                       f"lambda {lam_sum!r} <= {float(lam_c)!r}; omega {om_sum!r} <= {float(om_c)!r}"))
    return checks


def run_validate(cfg, out_dir, workers=1):
    checks = validation_checks(cfg)
    lines = ["check,passed,detail"] + [f"{name},{int(ok)},{json.dumps(detail)}" for name, ok, detail in checks]
    _write_text(os.path.join(out_dir, "validate.csv"), "\n".join(lines) + "\n")
    for name, ok, detail in checks:
        print(f"{'PASS' if ok else 'FAIL'}  {name}  {detail}")
    return 0 if all(ok for _, ok, _ in checks) else 1


PIPELINES = {
    "simulate": run_simulate,
    "solve": run_solve,
    "lln": run_lln,
    "truncation": run_truncation,
    "validate": run_validate,
}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def build_parser():
    p = _Parser(prog="spatial-sir", description="Spatial SIR model with varying infectivity.")
    p.add_argument("subcommand", choices=SUBCOMMANDS)
    p.add_argument("--config", help="YAML configuration (default: the shipped standard instance)")
    p.add_argument("--out", default="out", help="output directory (created if missing)")
    p.add_argument("--workers", type=int, default=1, help="worker processes for replicate fan-out")
    p.add_argument("--seed", type=int, help="override the master seed")
    return p


def _error_record(out_dir, kind, message, status):
    record = {"status": status, "error": kind, "message": message}
    text = json.dumps(record, sort_keys=True)
    print(text, file=sys.stderr)
    if out_dir is not None:
        try:
            os.makedirs(out_dir, exist_ok=True)
            _write_text(os.path.join(out_dir, "error.json"), text + "\n")
        except OSError:
            pass
    return status


def dispatch(subcommand, cfg, out_dir, workers=1):
    """Run one pipeline; returns the exit status."""
    if subcommand not in PIPELINES:
        raise UsageError(f"unknown subcommand {subcommand!r}")
    if workers < 1:
        raise UsageError("--workers must be at least 1")
    os.makedirs(out_dir, exist_ok=True)
    _write_text(os.path.join(out_dir, "config.yaml"), cfg.dump())
    return PIPELINES[subcommand](cfg, out_dir, workers)


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(parser.format_usage(), end="", file=sys.stderr)
        return _error_record(None, "UsageError", str(exc), 2)
    try:
        if args.config:
            with open(args.config, encoding="utf-8") as fh:
                text = fh.read()
        else:
            text = default_config_text()
        cfg = parse_config(text)
        if args.seed is not None:
            data = dict(cfg.data)
            data["seed"] = int(args.seed)
            cfg = validate(data)
        return dispatch(args.subcommand, cfg, args.out, args.workers)
    except (ConfigurationError, UsageError, OSError) as exc:
        return _error_record(args.out, type(exc).__name__, str(exc), 2)
    except SpatialSIRError as exc:
        return _error_record(args.out, type(exc).__name__, str(exc), 1)


if __name__ == "__main__":
    sys.exit(main())
