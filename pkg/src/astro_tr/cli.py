"""Command-line entry point: ``astro-tr {run,bench,validate}``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .config import Config, parse_config, to_sections
from .engine import run
from .errors import AstroError, ConfigError
from .harness import emit_report, fit_slope, validate_variance, work_complexity
from .io import atomic_write
from .oracle import StreamMode, make_problem

log = logging.getLogger("astro_tr")


@dataclass(frozen=True)
class CliConfig:
    command: str
    config_path: str | None
    output_dir: str
    overrides: tuple = ()
    verbosity: int = 1


def _snapshot(cfg: Config, out: Path, extra=None) -> Path:
    payload = {"config": to_sections(cfg)}
    if extra:
        payload.update(extra)
    return atomic_write(out / "config.json", json.dumps(payload, indent=2, sort_keys=True) + "\n")


def _cmd_run(cfg: Config, out: Path, say):
    oracle = make_problem(cfg.problem)
    trace = run(oracle, cfg.engine)
    if not trace.records:
        raise AstroError(f"run produced no iterations (termination: {trace.termination})")
    atomic_write(out / "trace.csv", trace.to_csv())
    _snapshot(cfg, out, {"termination": trace.termination, "resolved_kappa_as": trace.kappa_as})
    last = trace.records[-1]
    g = last.true_grad_norm if last.true_grad_norm is not None else last.model_grad_norm
    say(f"iterations={len(trace.records)} cum_work={last.cum_work} final_grad_norm={g:.6g} termination={trace.termination}")


def _cmd_bench(cfg: Config, out: Path, say):
    h = cfg.harness
    table = work_complexity(cfg.problem, h.rules, h.eps_grid, h.replications, cfg.engine, h.workers)
    emit_report(table, out, "work")
    _snapshot(cfg, out, {"metadata": table.metadata})
    for rule in table.rules():
        try:
            fit = fit_slope(table, rule)
            slope = f"{fit.slope:.3f}"
        except AstroError:
            slope = "n/a"
        w = [r.w_eps for r in table.rows if r.rule == rule and not r.censored]
        total = max(w) if w else 0
        say(f"rule={rule} slope={slope} max_cum_work={total}")


def _cmd_validate(cfg: Config, out: Path, say):
    h = cfg.harness
    oracle = make_problem(cfg.problem)
    x = np.asarray(h.x if h.x is not None else oracle.x0, dtype=float)
    d = oracle.dimension
    u = np.asarray(h.s_direction if h.s_direction is not None else np.ones(d), dtype=float)
    if u.size != d or not np.linalg.norm(u) > 0:
        raise ConfigError("harness.s_direction must be a non-zero vector of the problem dimension")
    u = u / np.linalg.norm(u)
    reports = validate_variance(oracle, x, [r * u for r in h.s_norms], h.n, StreamMode(h.mode), cfg.engine.master_seed)
    emit_report(reports, out, "variance")
    _snapshot(cfg, out)
    for r in reports:
        say(f"s_norm={r.s_norm:.4g} var_hat={r.var_hat:.6g} bound={r.bound_or_target:.6g} pass={r.passed}")


COMMANDS = {"run": _cmd_run, "bench": _cmd_bench, "validate": _cmd_validate}


def dispatch(cli: CliConfig) -> int:
    """Execute one subcommand; 0 iff every artifact was written."""
    say = print if cli.verbosity > 0 else (lambda *_: None)
    try:
        cfg = parse_config(cli.config_path, cli.overrides)
        out = Path(cli.output_dir)
        out.mkdir(parents=True, exist_ok=True)
        COMMANDS[cli.command](cfg, out, say)
    except ConfigError as exc:
        print(f"astro-tr: configuration error: {exc}", file=sys.stderr)
        return 2
    except (AstroError, OSError, ValueError) as exc:
        print(f"astro-tr: {cli.command} failed: {exc}", file=sys.stderr)
        return 1
    return 0


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="PATH", help="INI or JSON configuration file")
    common.add_argument("--out", metavar="DIR", default="out", help="output directory (default: out)")
    common.add_argument("--set", metavar="KEY=VALUE", action="append", default=[], dest="overrides",
                        help="override, e.g. engine.eta=0.2 (repeatable)")
    common.add_argument("--seed", type=int, help="shorthand for --set engine.master_seed=N")
    common.add_argument("--quiet", action="store_true", help="suppress the summary")

    parser = argparse.ArgumentParser(prog="astro-tr", description="Adaptive-sampling stochastic trust-region runs and benchmarks.")
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("run", parents=[common], help="one optimization run, writes trace.csv")
    sub.add_parser("bench", parents=[common], help="work-complexity table, writes work.csv and work.svg")
    sub.add_parser("validate", parents=[common], help="variance of function differences, writes variance.csv")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    overrides = list(args.overrides)
    if args.seed is not None:
        overrides.append(f"engine.master_seed={args.seed}")
    logging.basicConfig(level=logging.WARNING if args.quiet else logging.INFO, format="%(message)s")
    cli = CliConfig(args.command, args.config, args.out, tuple(overrides), 0 if args.quiet else 1)
    return dispatch(cli)


if __name__ == "__main__":
    sys.exit(main())
