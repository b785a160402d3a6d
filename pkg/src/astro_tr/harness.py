"""Experiment harness: hitting times, work-complexity slopes, variance checks."""

from __future__ import annotations

import csv
import hashlib
import io
import json
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .engine import EngineConfig, RunTrace, run
from .errors import EstimationError, UsageError
from .io import atomic_write
from .oracle import ProblemSpec, StreamMode, make_problem, stream_keys
from .sampling import parse_rule

ROLE_VALIDATE = 2

TABLE_COLUMNS = ("rule", "epsilon", "replication", "t_eps", "w_eps", "censored")
VARIANCE_COLUMNS = ("x", "s_norm", "mode", "n", "var_hat", "bound", "pass")


@dataclass(frozen=True)
class HittingTimes:
    epsilon: float
    t_eps: int | None  # None: not reached
    w_eps: int | None

    @property
    def reached(self) -> bool:
        return self.t_eps is not None


@dataclass(frozen=True)
class Row:
    rule: str
    epsilon: float
    replication: int
    t_eps: int | None
    w_eps: int | None

    @property
    def censored(self) -> bool:
        return self.t_eps is None


@dataclass
class ExperimentTable:
    rows: list = field(default_factory=list)
    metadata: dict = field(default_factory=dict)

    def add(self, row: Row):
        key = (row.rule, row.epsilon, row.replication)
        if any((r.rule, r.epsilon, r.replication) == key for r in self.rows):
            raise UsageError(f"duplicate row {key}")
        self.rows.append(row)

    def sorted_rows(self):
        return sorted(self.rows, key=lambda r: (r.rule, -r.epsilon, r.replication))

    def rules(self):
        return sorted({r.rule for r in self.rows})

    def cell(self, rule: str, epsilon: float):
        return [r for r in self.rows if r.rule == rule and r.epsilon == epsilon]

    def censoring(self, rule: str, epsilon: float) -> float:
        c = self.cell(rule, epsilon)
        return sum(r.censored for r in c) / len(c) if c else 0.0

    def median_work(self, rule: str, epsilon: float) -> float:
        """Median W over uncensored replications (nan if none)."""
        w = [r.w_eps for r in self.cell(rule, epsilon) if not r.censored]
        return float(np.median(w)) if w else math.nan

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(TABLE_COLUMNS)
        for r in self.sorted_rows():
            w.writerow(
                [
                    r.rule,
                    repr(float(r.epsilon)),
                    r.replication,
                    "" if r.t_eps is None else r.t_eps,
                    "" if r.w_eps is None else r.w_eps,
                    int(r.censored),
                ]
            )
        return buf.getvalue()


@dataclass(frozen=True)
class VarianceReport:
    x: np.ndarray
    s: np.ndarray
    mode: StreamMode
    n: int
    var_hat: float
    bound_or_target: float
    passed: bool
    note: str = ""

    @property
    def s_norm(self) -> float:
        return float(np.linalg.norm(self.s))


@dataclass(frozen=True)
class SlopeFit:
    slope: float
    intercept: float
    residuals: np.ndarray
    epsilons: tuple

    @property
    def rms_residual(self) -> float:
        return float(np.sqrt(np.mean(self.residuals**2)))


# --------------------------------------------------------------------------
# Hitting times and complexity tables
# --------------------------------------------------------------------------


def hitting_times(trace: RunTrace, eps_grid) -> list:
    """First iteration whose incumbent has true gradient norm <= eps."""
    recs = trace.records
    if any(r.true_grad_norm is None for r in recs):
        raise UsageError("trace has no true gradient norms")
    out = []
    for eps in eps_grid:
        hit = next((r for r in recs if r.true_grad_norm <= eps), None)
        if hit is None:
            out.append(HittingTimes(float(eps), None, None))
        else:
            out.append(HittingTimes(float(eps), hit.k, hit.cum_work))
    return out


def config_hash(spec: ProblemSpec, cfg: EngineConfig) -> str:
    payload = json.dumps(
        {"problem": _spec_dict(spec), "engine": cfg.to_dict()}, sort_keys=True, default=str
    )
    return hashlib.sha256(payload.encode()).hexdigest()[:16]


def _spec_dict(spec: ProblemSpec) -> dict:
    return {
        "name": spec.name,
        "dimension": spec.dimension,
        "noise_scale": spec.noise_scale,
        "parameters": dict(sorted(spec.parameters.items())),
        "x0": None if spec.x0 is None else list(spec.x0),
    }


def default_workers() -> int:
    try:
        return max(1, int(os.environ.get("ASTRO_TR_THREADS", "1")))
    except ValueError:
        return 1


def _one_run(spec, cfg, eps_grid):
    trace = run(make_problem(spec), cfg)
    return trace, hitting_times(trace, eps_grid)


def work_complexity(
    spec: ProblemSpec,
    rules,
    eps_grid,
    replications: int,
    template: EngineConfig,
    workers: int | None = None,
) -> ExperimentTable:
    """Run every (rule, replication) once and tabulate hitting work.

    Each run stops at the smallest tolerance so all levels come from the
    same trajectory.  Replication ``r`` uses the stream prefix ``[r, ...]``.
    """
    eps_grid = [float(e) for e in eps_grid]
    if replications < 3:
        raise UsageError("need at least 3 replications")
    if any(b >= a for a, b in zip(eps_grid, eps_grid[1:])) or not eps_grid:
        raise UsageError("eps_grid must be non-empty and strictly decreasing")
    rules = [parse_rule(r) for r in rules]
    jobs = []
    for rule in rules:
        rcfg = replace(template, rule=replace(template.rule, rule=rule), grad_tol=eps_grid[-1])
        for rep in range(replications):
            jobs.append((rule.value, rep, replace(rcfg, replication=rep)))
    workers = workers or default_workers()
    if workers > 1:
        with ThreadPoolExecutor(workers) as ex:
            results = list(ex.map(lambda j: _one_run(spec, j[2], eps_grid), jobs))
    else:
        results = [_one_run(spec, j[2], eps_grid) for j in jobs]

    table = ExperimentTable()
    never = {}
    for (rule, rep, _), (trace, hits) in zip(jobs, results):
        for h in hits:
            table.add(Row(rule, h.epsilon, rep, h.t_eps, h.w_eps))
        if not hits[-1].reached:
            never[rule] = never.get(rule, 0) + 1
    table.rows = table.sorted_rows()
    table.metadata = {
        "problem": spec.name,
        "config_hash": config_hash(spec, template),
        "replications": replications,
        "censored_runs": dict(sorted(never.items())),
    }
    return table


def fit_slope(table: ExperimentTable, rule) -> SlopeFit:
    """OLS slope of log(median W) against log(1/eps).

    Censored replications are left out of each median; a level with no
    uncensored replication is dropped.
    """
    rule = parse_rule(rule).value
    eps = sorted({r.epsilon for r in table.rows if r.rule == rule}, reverse=True)
    pts = [(e, table.median_work(rule, e)) for e in eps]
    pts = [(e, w) for e, w in pts if np.isfinite(w) and w > 0]
    if len(pts) < 3:
        raise EstimationError(f"rule {rule}: need >= 3 uncensored levels, have {len(pts)}")
    xs = np.log([1.0 / e for e, _ in pts])
    ys = np.log([w for _, w in pts])
    A = np.column_stack([xs, np.ones_like(xs)])
    (slope, intercept), *_ = np.linalg.lstsq(A, ys, rcond=None)
    return SlopeFit(float(slope), float(intercept), ys - A @ [slope, intercept], tuple(e for e, _ in pts))


# --------------------------------------------------------------------------
# Variance of function differences
# --------------------------------------------------------------------------


def paired_differences(oracle, x, s, n: int, mode: StreamMode, master_seed: int = 0, tag: int = 0):
    """``n`` draws of ``F(x+s) - F(x)``, on shared or disjoint streams."""
    x = np.asarray(x, dtype=float)
    xs = x + np.asarray(s, dtype=float)
    prefix = [ROLE_VALIDATE, int(tag)]
    if mode is StreamMode.CRN:
        keys = stream_keys(master_seed, prefix + [0], 0, n)
        v, _ = oracle.sample(np.vstack([x, xs]), keys, gradients=False)
        return v[:, 1] - v[:, 0]
    v0, _ = oracle.sample(x[None, :], stream_keys(master_seed, prefix + [0], 0, n), gradients=False)
    v1, _ = oracle.sample(xs[None, :], stream_keys(master_seed, prefix + [1], 0, n), gradients=False)
    return v1[:, 0] - v0[:, 0]


def validate_variance(oracle, x, s_grid, n: int, mode, master_seed: int = 0) -> list:
    """Compare the empirical variance of paired differences with theory.

    Independent streams: target ``var(x) + var(x+s)``, pass within 10%.
    Common streams: the regularity-class bound, pass if not exceeded by
    more than 5%.  A problem without a bound for common streams still gets a
    report, flagged as a mismatch.
    """
    if n < 1000:
        raise UsageError("validate_variance needs n >= 1000")
    mode = StreamMode(mode) if not isinstance(mode, StreamMode) else mode
    if isinstance(oracle, ProblemSpec):
        oracle = make_problem(oracle)
    x = oracle.check_point(x)
    out = []
    for i, s in enumerate(s_grid):
        s = np.asarray(s, dtype=float)
        d = paired_differences(oracle, x, s, n, mode, master_seed, tag=i)
        var_hat = float(np.var(d))
        note = ""
        if mode is StreamMode.INDEPENDENT:
            target = oracle.variance(x) + oracle.variance(x + s)
            ok = abs(var_hat - target) <= 0.1 * target
        else:
            target = oracle.crn_bound(x, s)
            if target is None:
                target, ok = math.nan, False
                note = f"no common-stream bound for {oracle.regularity.value}"
            else:
                ok = var_hat <= 1.05 * target + 1e-24
        out.append(VarianceReport(x.copy(), s, mode, n, var_hat, float(target), bool(ok), note))
    return out


def bootstrap_variance_width(diffs, resamples: int = 200, level: float = 0.95, seed: int = 0) -> float:
    """Width of the percentile bootstrap interval for the variance."""
    d = np.asarray(diffs, dtype=float)
    rng = np.random.default_rng(seed)
    idx = rng.integers(0, d.size, size=(resamples, d.size))
    v = d[idx].var(axis=1)
    lo, hi = np.quantile(v, [(1 - level) / 2, (1 + level) / 2])
    return float(hi - lo)


def variance_csv(reports) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(VARIANCE_COLUMNS)
    for r in reports:
        w.writerow(
            [
                ";".join(repr(float(v)) for v in r.x),
                repr(r.s_norm),
                r.mode.value,
                r.n,
                repr(r.var_hat),
                repr(r.bound_or_target),
                int(r.passed),
            ]
        )
    return buf.getvalue()


# --------------------------------------------------------------------------
# Reports
# --------------------------------------------------------------------------

_COLORS = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b")


def work_svg(table: ExperimentTable, width: int = 560, height: int = 400) -> str:
    """Log-log plot of median work against 1/eps, one polyline per rule."""
    series = {}
    for rule in table.rules():
        eps = sorted({r.epsilon for r in table.rows if r.rule == rule}, reverse=True)
        pts = [(1.0 / e, table.median_work(rule, e)) for e in eps]
        series[rule] = [(math.log10(a), math.log10(b)) for a, b in pts if np.isfinite(b) and b > 0]
    allp = [p for v in series.values() for p in v] or [(0.0, 0.0)]
    x0, x1 = min(p[0] for p in allp), max(p[0] for p in allp)
    y0, y1 = min(p[1] for p in allp), max(p[1] for p in allp)
    x1, y1 = (x1 if x1 > x0 else x0 + 1), (y1 if y1 > y0 else y0 + 1)
    ml, mr, mt, mb = 60, 120, 20, 50
    pw, ph = width - ml - mr, height - mt - mb

    def px(p):
        return (ml + (p[0] - x0) / (x1 - x0) * pw, mt + ph - (p[1] - y0) / (y1 - y0) * ph)

    lines = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="12">',
        f'<rect x="{ml}" y="{mt}" width="{pw}" height="{ph}" fill="none" stroke="#444"/>',
        f'<text x="{ml + pw / 2:.1f}" y="{height - 12}" text-anchor="middle">log10(1/eps)</text>',
        f'<text x="16" y="{mt + ph / 2:.1f}" text-anchor="middle" '
        f'transform="rotate(-90 16 {mt + ph / 2:.1f})">log10(median work)</text>',
        f'<text x="{ml}" y="{mt + ph + 16}" text-anchor="middle">{x0:.2f}</text>',
        f'<text x="{ml + pw}" y="{mt + ph + 16}" text-anchor="middle">{x1:.2f}</text>',
        f'<text x="{ml - 6}" y="{mt + ph}" text-anchor="end">{y0:.2f}</text>',
        f'<text x="{ml - 6}" y="{mt + 10}" text-anchor="end">{y1:.2f}</text>',
    ]
    for i, (rule, pts) in enumerate(series.items()):
        color = _COLORS[i % len(_COLORS)]
        coords = " ".join(f"{a:.2f},{b:.2f}" for a, b in map(px, pts))
        lines.append(f'<polyline fill="none" stroke="{color}" stroke-width="2" points="{coords}"/>')
        ly = mt + 16 + 18 * i
        lines.append(f'<line x1="{ml + pw + 12}" y1="{ly}" x2="{ml + pw + 36}" y2="{ly}" stroke="{color}" stroke-width="2"/>')
        lines.append(f'<text x="{ml + pw + 42}" y="{ly + 4}">{rule}</text>')
    lines.append("</svg>")
    return "\n".join(lines) + "\n"


def emit_report(obj, path, stem: str = "report") -> list:
    """Write CSV (and SVG for non-empty tables) into directory ``path``.

    Returns the written paths.  Output is deterministic for equal inputs.
    """
    path = Path(path)
    written = []
    if isinstance(obj, ExperimentTable):
        written.append(atomic_write(path / f"{stem}.csv", obj.to_csv()))
        if obj.rows:
            written.append(atomic_write(path / f"{stem}.svg", work_svg(obj)))
    else:
        written.append(atomic_write(path / f"{stem}.csv", variance_csv(list(obj))))
    return written
