"""Command-line front end.

Subcommands mirror the library layers: ``classify`` reads a path file and
prints the crossing record with its announcing forecast, ``simulate``
prints Monte Carlo estimates, ``closed-form`` and ``volterra`` evaluate
the transforms, ``table`` puts the two side by side with z-scores, and
``verify`` runs the acceptance suite.

Configuration lives in an INI file with one section per layer; every key
is optional and falls back to the documented default. ``--set
section.key=value`` overrides win over the file. The resolved
configuration is echoed at the top of every output so each number is
reproducible from the report alone; ``--report FILE`` saves the exact
bytes that went to stdout.

Exit codes: 0 success, 1 usage or malformed input, 2 numerical failure,
3 acceptance suite failure.
"""

from __future__ import annotations

import argparse
import configparser
import math
import os
import re
import sys
from dataclasses import dataclass
from typing import Callable

from . import analytic
from .acceptance import AcceptanceSettings, run_acceptance
from .errors import ConvergenceError, NumericalError, StructuralError
from .paths import (
    EPS_MODE,
    Barrier,
    announcing_sequence,
    check_no_premature_contact,
    first_passage,
    load_corpus,
    load_path,
    restricted_times,
)
from .simulate import ModelParams, SimConfig, run_paths
from . import mc

_ENV_WORKERS = "PASSAGELAB_WORKERS"

# Documented defaults; the config file and --set may only touch keys
# listed here, which turns typos into usage errors instead of silently
# ignored settings.
_DEFAULTS = {
    "model": {
        "alpha": "0.1", "beta": "-0.5", "sigma": "0.3", "lam": "1.0",
        "eta": "2.0", "a": "1.0", "x": "0.0",
    },
    "sim": {
        "horizon": "50.0", "step": "1e-3", "seed": "20260819",
        "bridge_correction": "true", "n_paths": "100000",
    },
    "solver": {
        "n_cells": "16384", "x_min": "auto", "tol": "1e-10",
        "max_iter": "100", "truncation_check": "true",
    },
    "run": {
        "q_list": "0.05", "x_list": "", "workers": "auto",
    },
    "verify": {
        "q_sweep": "0.01 0.05 0.1", "cp_n_paths": "100000",
        "cp_horizon": "8.0",
    },
}


def _fmt(v) -> str:
    if isinstance(v, float):
        return f"{v:.12g}"
    return str(v)


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    """argparse that reports usage problems through the exit-code map."""

    def error(self, message):
        raise _UsageError(message)


# ---------------------------------------------------------------------------
# configuration

@dataclass(frozen=True)
class RunConfig:
    """Everything a command needs, resolved from defaults, file, and flags."""

    model: ModelParams
    sim: SimConfig
    solver: analytic.VolterraGrid
    q_list: tuple[float, ...]
    x_list: tuple[float, ...]
    workers: int | None
    verify_settings: AcceptanceSettings


def _typed(section: str, key: str, raw: str, conv: Callable):
    try:
        return conv(raw)
    except ValueError:
        raise StructuralError(
            f"config [{section}] {key}: cannot parse {raw!r}") from None


def _float_list(section: str, key: str, raw: str) -> tuple[float, ...]:
    toks = [t for t in re.split(r"[,\s]+", raw.strip()) if t]
    return tuple(_typed(section, key, t, float) for t in toks)


def _read_config(config_path: str | None, overrides: list[str]
                 ) -> configparser.ConfigParser:
    cp = configparser.ConfigParser(interpolation=None,
                                   inline_comment_prefixes=("#", ";"))
    cp.read_dict(_DEFAULTS)
    if config_path is not None:
        try:
            with open(config_path) as fh:
                cp.read_file(fh, source=config_path)
        except FileNotFoundError:
            raise StructuralError(
                f"config file not found: {config_path}") from None
        except configparser.Error as exc:
            raise StructuralError(f"config file: {exc}") from None
    for sec in cp.sections():
        if sec not in _DEFAULTS:
            raise StructuralError(f"unknown config section [{sec}]")
        for key in cp[sec]:
            if key not in _DEFAULTS[sec]:
                raise StructuralError(f"unknown config key [{sec}] {key}")
    for item in overrides:
        target, eq, value = item.partition("=")
        section, dot, key = target.partition(".")
        if not (eq and dot and section and key):
            raise StructuralError(
                f"bad override {item!r}, expected section.key=value")
        if section not in _DEFAULTS or key not in _DEFAULTS[section]:
            raise StructuralError(f"unknown config key [{section}] {key}")
        cp[section][key] = value
    return cp


def _resolve_workers(raw: str, flag: int | None) -> int | None:
    if flag is not None:
        return flag
    if raw.strip().lower() == "auto":
        env = os.environ.get(_ENV_WORKERS, "").strip()
        return _typed("run", "workers", env, int) if env else None
    return _typed("run", "workers", raw, int)


def resolve_config(args) -> RunConfig:
    cp = _read_config(args.config, args.set)
    if args.seed is not None:
        cp["sim"]["seed"] = str(args.seed)

    gf = lambda s, k: _typed(s, k, cp[s][k], float)
    gi = lambda s, k: _typed(s, k, cp[s][k], int)

    def gb(s, k):
        try:
            return cp.getboolean(s, k)
        except ValueError:
            raise StructuralError(
                f"config [{s}] {k}: cannot parse {cp[s][k]!r}") from None

    model = ModelParams(alpha=gf("model", "alpha"), beta=gf("model", "beta"),
                        sigma=gf("model", "sigma"), lam=gf("model", "lam"),
                        eta=gf("model", "eta"), a=gf("model", "a"),
                        x=gf("model", "x"))
    sim = SimConfig(horizon=gf("sim", "horizon"), step=gf("sim", "step"),
                    seed=gi("sim", "seed"),
                    bridge_correction=gb("sim", "bridge_correction"),
                    n_paths=gi("sim", "n_paths"))
    raw_x_min = cp["solver"]["x_min"].strip().lower()
    solver = analytic.VolterraGrid(
        n_cells=gi("solver", "n_cells"),
        x_min=None if raw_x_min == "auto" else gf("solver", "x_min"),
        tol=gf("solver", "tol"), max_iter=gi("solver", "max_iter"),
        truncation_check=gb("solver", "truncation_check"))

    q_list = _float_list("run", "q_list", cp["run"]["q_list"])
    if any(q < 0.0 for q in q_list):
        raise StructuralError("q_list entries must be nonnegative")
    x_list = _float_list("run", "x_list", cp["run"]["x_list"]) or (model.x,)
    workers = _resolve_workers(cp["run"]["workers"], args.workers)

    verify_settings = AcceptanceSettings(
        params=model, horizon=sim.horizon, step=sim.step,
        n_paths=sim.n_paths, seed=sim.seed,
        q_sweep=_float_list("verify", "q_sweep", cp["verify"]["q_sweep"]),
        cp_n_paths=gi("verify", "cp_n_paths"),
        cp_horizon=gf("verify", "cp_horizon"))
    return RunConfig(model, sim, solver, q_list, x_list, workers,
                     verify_settings)


# ---------------------------------------------------------------------------
# output helpers

def _model_line(p: ModelParams) -> str:
    return (f"# model alpha={_fmt(p.alpha)} beta={_fmt(p.beta)} "
            f"sigma={_fmt(p.sigma)} lam={_fmt(p.lam)} eta={_fmt(p.eta)} "
            f"a={_fmt(p.a)} x={_fmt(p.x)}")


def _sim_line(c: SimConfig) -> str:
    return (f"# sim horizon={_fmt(c.horizon)} step={_fmt(c.step)} "
            f"seed={c.seed} n_paths={c.n_paths} "
            f"bridge_correction={'yes' if c.bridge_correction else 'no'}")


def _solver_line(g: analytic.VolterraGrid) -> str:
    x_min = "auto" if g.x_min is None else _fmt(g.x_min)
    return (f"# solver n_cells={g.n_cells} x_min={x_min} tol={_fmt(g.tol)} "
            f"max_iter={g.max_iter}")


def _run_line(rc: RunConfig) -> str:
    qs = ",".join(_fmt(q) for q in rc.q_list)
    xs = ",".join(_fmt(x) for x in rc.x_list)
    return f"# run q_list={qs} x_list={xs}"


def _row(*cells) -> str:
    return "\t".join(_fmt(c) for c in cells)


# ---------------------------------------------------------------------------
# commands

def _cmd_classify(rc: RunConfig, args) -> tuple[str, int]:
    if (args.path_file is None) == (args.corpus is None):
        raise StructuralError("give exactly one of PATH_FILE or --corpus")
    if args.corpus is not None:
        path, source = load_corpus(args.corpus), f"corpus:{args.corpus}"
    else:
        path, source = load_path(args.path_file), args.path_file
    barrier = Barrier.constant(args.barrier)
    rec = first_passage(path, barrier, eps=args.eps)
    tau_contact, tau_gap = restricted_times(rec)
    clean, witness = check_no_premature_contact(path, barrier, eps=args.eps)
    ann = announcing_sequence(path, barrier, n_max=args.announce)
    lines = [
        "# passagelab classify",
        f"# source {source} barrier={_fmt(args.barrier)} "
        f"eps={_fmt(args.eps)} n_max={args.announce}",
        f"tau = {_fmt(rec.tau)}",
        f"y_minus = {_fmt(rec.y_minus)}",
        f"y_at = {_fmt(rec.y_at)}",
        f"mode = {rec.mode.name}",
        f"tau_contact = {_fmt(tau_contact)}",
        f"tau_gap = {_fmt(tau_gap)}",
        f"premature_contact = {'no' if clean else 'yes'}",
        f"contact_witness = {'-' if witness is None else _fmt(witness)}",
        f"sigma = {','.join(_fmt(s) for s in ann.sigma)}",
        f"rho = {','.join(_fmt(r) for r in ann.rho)}",
        f"sigma_limit = {_fmt(ann.sigma_limit)}",
        f"announcing_converged = {'yes' if ann.converged else 'no'}",
    ]
    return "\n".join(lines) + "\n", 0


def _cmd_simulate(rc: RunConfig, args) -> tuple[str, int]:
    result = run_paths(rc.model, rc.sim, q_list=rc.q_list, workers=rc.workers)
    lines = ["# passagelab simulate", _model_line(rc.model),
             _sim_line(rc.sim), _run_line(rc),
             "metric\tq\testimate\tstd_error\tn"]
    probs = mc.estimate_mode_probs(rc.model, rc.sim, result)
    for mode, est in probs.items():
        lines.append(_row(f"P_{mode.name}", "-", est.mean, est.std_error,
                          est.n))
    for q in rc.q_list:
        ind = mc.estimate_gq_indicator(rc.model, rc.sim, q, result)
        comp = mc.estimate_gq_compensator(rc.model, rc.sim, q, result)
        h_est, f_est = mc.estimate_hq_fq(rc.model, rc.sim, q, result)
        lines.append(_row("G_indicator", q, ind.mean, ind.std_error, ind.n))
        lines.append(_row("G_compensator", q, comp.mean, comp.std_error,
                          comp.n))
        lines.append(_row("H_all_crossings", q, h_est.mean, h_est.std_error,
                          h_est.n))
        lines.append(_row("F_creep_only", q, f_est.mean, f_est.std_error,
                          f_est.n))
    return "\n".join(lines) + "\n", 0


def _cmd_closed_form(rc: RunConfig, args) -> tuple[str, int]:
    slope = analytic.boundary_slope(rc.model)
    lines = ["# passagelab closed-form", _model_line(rc.model),
             _run_line(rc), f"# boundary_slope = {_fmt(slope)}",
             "x\tg0\tcreep_prob"]
    for x in rc.x_list:
        lines.append(_row(x, analytic.g0(rc.model, x),
                          analytic.creeping_prob(rc.model, x)))
    return "\n".join(lines) + "\n", 0


def _solved(rc: RunConfig, q: float) -> analytic.VolterraSolution:
    sol = analytic.solve_wq(rc.model, q, rc.solver)
    if not sol.converged:
        raise ConvergenceError(
            f"q={_fmt(q)}: sup_delta={_fmt(sol.sup_delta)} after "
            f"{sol.iterations} iterations (tol {_fmt(rc.solver.tol)})")
    return sol


def _cmd_volterra(rc: RunConfig, args) -> tuple[str, int]:
    lines = ["# passagelab volterra", _model_line(rc.model),
             _solver_line(rc.solver), _run_line(rc),
             "q\tx\tgq\titerations\tsup_delta\ttruncation_error\tconverged"]
    for q in rc.q_list:
        sol = _solved(rc, q)
        trunc = "-" if sol.truncation_error is None \
            else _fmt(sol.truncation_error)
        for x in rc.x_list:
            gq = analytic.gq_from_solution(sol, x)
            lines.append(_row(q, x, gq, sol.iterations, sol.sup_delta,
                              trunc, "yes" if sol.converged else "no"))
    return "\n".join(lines) + "\n", 0


def _cmd_table(rc: RunConfig, args) -> tuple[str, int]:
    result = run_paths(rc.model, rc.sim, q_list=rc.q_list, workers=rc.workers)
    lines = ["# passagelab table", _model_line(rc.model), _sim_line(rc.sim),
             _solver_line(rc.solver), _run_line(rc),
             "x\tq\tgq_ref\tgq_indicator\tse_indicator\tz_indicator"
             "\tgq_compensator\tse_compensator\tz_compensator"]
    x0 = rc.model.x
    for q in rc.q_list:
        if q == 0.0:
            ref = analytic.g0(rc.model, x0)
        else:
            ref = analytic.gq_from_solution(_solved(rc, q), x0)
        ind = mc.estimate_gq_indicator(rc.model, rc.sim, q, result)
        comp = mc.estimate_gq_compensator(rc.model, rc.sim, q, result)
        z_ind = abs(ind.mean - ref) / ind.std_error \
            if ind.std_error > 0 else math.inf
        z_comp = abs(comp.mean - ref) / comp.std_error \
            if comp.std_error > 0 else math.inf
        lines.append(_row(x0, q, ref, ind.mean, ind.std_error, z_ind,
                          comp.mean, comp.std_error, z_comp))
    return "\n".join(lines) + "\n", 0


def _cmd_verify(rc: RunConfig, args) -> tuple[str, int]:
    report = run_acceptance(rc.verify_settings, workers=rc.workers)
    for line in report.timing_lines():
        print(line, file=sys.stderr)
    return report.render(), 0 if report.passed else 3


_COMMANDS = {
    "classify": _cmd_classify,
    "simulate": _cmd_simulate,
    "closed-form": _cmd_closed_form,
    "volterra": _cmd_volterra,
    "table": _cmd_table,
    "verify": _cmd_verify,
}


# ---------------------------------------------------------------------------
# entry point

def _build_parser() -> _Parser:
    common = _Parser(add_help=False)
    common.add_argument("--config", metavar="FILE",
                        help="INI configuration file")
    common.add_argument("--set", action="append", default=[],
                        metavar="SECTION.KEY=VALUE",
                        help="override one config value (repeatable)")
    common.add_argument("--workers", type=int, metavar="N",
                        help=f"worker processes (default: ${_ENV_WORKERS} "
                             "or serial)")
    common.add_argument("--seed", type=int, metavar="N",
                        help="shortcut for --set sim.seed=N")
    common.add_argument("--report", metavar="FILE",
                        help="also save the stdout bytes to FILE")

    parser = _Parser(prog="passagelab",
                     description="First-passage modes of jump diffusions: "
                                 "classify, simulate, evaluate, verify.")
    sub = parser.add_subparsers(dest="command", required=True,
                                parser_class=_Parser)

    p = sub.add_parser("classify", parents=[common],
                       help="crossing record and announcing forecast of a "
                            "path file")
    p.add_argument("path_file", nargs="?", help="path file to classify")
    p.add_argument("--corpus", metavar="NAME",
                   help="use a bundled demonstration path instead of a file")
    p.add_argument("--barrier", type=float, default=0.0,
                   help="constant barrier level (default 0)")
    p.add_argument("--eps", type=float, default=EPS_MODE,
                   help="equality tolerance for the mode tests")
    p.add_argument("--announce", type=int, default=8, metavar="N",
                   help="number of forecast levels to print (default 8)")

    sub.add_parser("simulate", parents=[common],
                   help="Monte Carlo mode probabilities and transforms")
    sub.add_parser("closed-form", parents=[common],
                   help="undiscounted closed forms over x_list")
    sub.add_parser("volterra", parents=[common],
                   help="discounted transform over q_list and x_list")
    sub.add_parser("table", parents=[common],
                   help="closed-form / integral-equation vs Monte Carlo")
    sub.add_parser("verify", parents=[common],
                   help="run the acceptance suite (exit 3 on failure)")
    return parser


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except _UsageError as exc:
        print(f"error: usage: {exc}", file=sys.stderr)
        return 1
    try:
        rc = resolve_config(args)
        text, status = _COMMANDS[args.command](rc, args)
        sys.stdout.write(text)
        if args.report is not None:
            with open(args.report, "w") as fh:
                fh.write(text)
    except StructuralError as exc:
        print(f"error: structural: {exc}", file=sys.stderr)
        return 1
    except NumericalError as exc:
        print(f"error: numerical: {type(exc).__name__}: {exc}",
              file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: io: {exc}", file=sys.stderr)
        return 1
    return status


if __name__ == "__main__":
    sys.exit(main())
