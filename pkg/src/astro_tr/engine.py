"""Adaptive-sampling trust-region loop for zeroth- and first-order oracles.

One iteration builds a local model from adaptively sampled estimates at the
incumbent (model update), minimizes it in the trust region (step), estimates
the function at the candidate (candidate evaluation) and accepts or rejects
it with the success ratio and the criticality test (trust-region management).
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import asdict, dataclass, field, fields, replace

import numpy as np

from . import model as _model
from .errors import BudgetExhausted, ConfigError, UsageError
from .oracle import StochasticOracle, StreamMode, StreamPolicy
from .sampling import (
    InflationSchedule,
    Rule,
    SampleStats,
    SamplingRule,
    StreamContext,
    inflation,
    sample_adaptively,
)
from .subproblem import solve

ROLE_ITERATION = 0
ROLE_PILOT = 1
PILOT_SAMPLES = 32

TRACE_COLUMNS = (
    "k",
    "delta",
    "rho",
    "success",
    "n_total",
    "cum_work",
    "model_grad_norm",
    "true_grad_norm",
    "f_true",
    "f_est",
    "balance_lhs",
)


@dataclass(frozen=True)
class EngineConfig:
    """Trust-region, sampling and stopping parameters for one run."""

    delta0: float = 1.0
    delta_max: float = 1e3
    eta: float = 0.1
    gamma1: float = 1.5
    gamma2: float = 0.75
    mu: float = 100.0
    rule: SamplingRule = field(default_factory=SamplingRule)
    inflation: InflationSchedule = field(default_factory=InflationSchedule)
    stream_policy: StreamPolicy | None = None  # None: the rule's default mode
    budget: int = 100_000
    grad_tol: float | None = None
    master_seed: int = 0
    replication: int = 0
    max_iterations: int | None = None
    delta_min: float = 1e-12
    kappa_H: float = 1e3
    kappa_fcd: float = 1.0
    model: str = "diagonal"

    def __post_init__(self):
        if not self.delta0 > 0:
            raise ConfigError("delta0 must be > 0")
        if not self.delta_max > self.delta0:
            raise ConfigError("delta_max must be > delta0")
        if not 0 < self.eta < 1:
            raise ConfigError("eta must be in (0,1)")
        if not self.gamma1 > 1:
            raise ConfigError("gamma1 must be > 1")
        if not 0 < self.gamma2 < 1:
            raise ConfigError("gamma2 must be in (0,1)")
        if not self.mu > 0:
            raise ConfigError("mu must be > 0")
        if int(self.budget) < 1:
            raise ConfigError("budget must be >= 1")
        if self.grad_tol is not None and not self.grad_tol > 0:
            raise ConfigError("grad_tol must be > 0")
        if self.max_iterations is not None and int(self.max_iterations) < 1:
            raise ConfigError("max_iterations must be >= 1")
        if not 0 <= self.delta_min < self.delta0:
            raise ConfigError("delta_min must be in [0, delta0)")
        if not self.kappa_H > 0:
            raise ConfigError("kappa_H must be > 0")
        if not 0 < self.kappa_fcd <= 1:
            raise ConfigError("kappa_fcd must be in (0,1]")
        if self.model not in ("diagonal", "quadratic"):
            raise ConfigError("model must be 'diagonal' or 'quadratic'")
        if int(self.replication) < 0:
            raise ConfigError("replication must be >= 0")

    @property
    def policy(self) -> StreamPolicy:
        if self.stream_policy is not None:
            return self.stream_policy
        return StreamPolicy(self.rule.rule.default_mode)

    def to_dict(self) -> dict:
        out = {}
        for f in fields(self):
            v = getattr(self, f.name)
            if f.name == "rule":
                v = {**asdict(v), "rule": v.rule.value}
            elif f.name == "inflation":
                v = asdict(v)
            elif f.name == "stream_policy":
                v = None if v is None else {"mode": v.mode.value, "aggressive_reuse": v.aggressive_reuse}
            out[f.name] = v
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "EngineConfig":
        data = dict(data)
        unknown = set(data) - {f.name for f in fields(cls)}
        if unknown:
            raise ConfigError(f"unknown engine key(s): {', '.join(sorted(unknown))}")
        if isinstance(data.get("rule"), dict):
            data["rule"] = SamplingRule(**data["rule"])
        if isinstance(data.get("inflation"), dict):
            data["inflation"] = InflationSchedule(**data["inflation"])
        sp = data.get("stream_policy")
        if isinstance(sp, dict):
            data["stream_policy"] = StreamPolicy(StreamMode(sp["mode"]), bool(sp.get("aggressive_reuse", False)))
        return cls(**data)


@dataclass
class IterationRecord:
    k: int
    x_center: np.ndarray
    delta: float
    n_per_point: list
    work_this_iter: int
    rho_hat: float
    success: bool
    model_grad_norm: float
    true_grad_norm: float | None
    f_est_center: float
    f_true_center: float | None
    balance_lhs: float | None
    cum_work: int
    # diagnostics beyond the exported columns
    x_candidate: np.ndarray | None = None
    f_est_candidate: float | None = None
    f_true_candidate: float | None = None
    rho_numerator: float | None = None
    model_decrease: float | None = None
    truncated: bool = False

    @property
    def n_total(self) -> int:
        return int(sum(self.n_per_point))


@dataclass
class RunTrace:
    config: EngineConfig
    problem: str
    records: list = field(default_factory=list)
    termination: str = ""
    kappa_as: float | None = None
    pilot_work: int = 0

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(TRACE_COLUMNS)
        for r in self.records:
            w.writerow(
                [
                    r.k,
                    _fmt(r.delta),
                    _fmt(r.rho_hat),
                    int(r.success),
                    r.n_total,
                    r.cum_work,
                    _fmt(r.model_grad_norm),
                    _fmt(r.true_grad_norm),
                    _fmt(r.f_true_center),
                    _fmt(r.f_est_center),
                    _fmt(r.balance_lhs),
                ]
            )
        return buf.getvalue()

    def snapshot(self) -> dict:
        cfg = self.config.to_dict()
        if self.kappa_as is not None:
            cfg["resolved_kappa_as"] = self.kappa_as
        return {"problem": self.problem, "termination": self.termination, "engine": cfg}


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float) and math.isinf(v):
        return "-inf" if v < 0 else "inf"
    return repr(float(v))


# --------------------------------------------------------------------------
# Trust-region pieces
# --------------------------------------------------------------------------


def success_ratio(fbar_s: float, fbar_0: float, m_s: float, m_0: float) -> float:
    """Estimated over predicted change; ``-inf`` when the prediction is null."""
    den = m_s - m_0
    if abs(den) <= 1e-14 * (1.0 + abs(m_0)):
        return -math.inf
    return (fbar_s - fbar_0) / den


def tr_update(rho: float, model_grad_norm: float, delta: float, cfg: EngineConfig):
    """Return ``(accept, new_delta)``."""
    if not delta > 0:
        raise UsageError("delta must be > 0")
    if rho > cfg.eta and model_grad_norm / delta >= 1.0 / cfg.mu:
        return True, min(cfg.gamma1 * delta, cfg.delta_max)
    return False, cfg.gamma2 * delta


@dataclass
class EngineState:
    k: int
    x: np.ndarray
    delta: float
    B: np.ndarray | None = None
    pending: tuple | None = None  # (step, gradient estimate) awaiting a BFGS update
    incumbent: SampleStats | None = None  # retained samples under aggressive reuse
    incumbent_slot: int | None = None
    next_slot: int = 0


# --------------------------------------------------------------------------
# Iteration
# --------------------------------------------------------------------------


class _Sampler:
    """Stream bookkeeping for one iteration."""

    def __init__(self, oracle, cfg: EngineConfig, state: EngineState):
        self.oracle = oracle
        self.cfg = cfg
        self.state = state
        pol = cfg.policy
        self.mode = pol.mode
        self.reuse = pol.aggressive_reuse
        kk = 0 if self.reuse else state.k
        self.ctx = StreamContext(cfg.master_seed, (int(cfg.replication), ROLE_ITERATION, kk), pol.mode)
        self.delta = state.delta
        self.lam = inflation(state.k, cfg.inflation)

    def slot(self, index: int) -> int:
        if not self.reuse:
            return index
        s = self.state.next_slot
        self.state.next_slot += 1
        return s

    def group(self, points, stats=None):
        return sample_adaptively(
            points,
            self.cfg.rule,
            self.delta,
            self.lam,
            self.ctx,
            self.oracle,
            stats=stats,
            call_limit=self.cfg.budget,
        )

    def single(self, point, slot, stats=None):
        return sample_adaptively(
            point,
            self.cfg.rule,
            self.delta,
            self.lam,
            self.ctx,
            self.oracle,
            stats=[stats],
            slots=[slot],
            call_limit=self.cfg.budget,
        )


def _mu_zeroth(sm: _Sampler, state: EngineState, cfg: EngineConfig):
    make = _model.coordinate_design if cfg.model == "diagonal" else _model.quadratic_design
    design = make(state.x, state.delta)
    P = design.all_points()
    if sm.mode is StreamMode.CRN:
        prior = [state.incumbent] + [None] * (P.shape[0] - 1)
        res = sm.group(P, prior)
        stats, truncated = res.stats, res.truncated
        slots = None
    else:
        stats, truncated, slots = [], False, []
        for i, p in enumerate(P):
            reuse_center = i == 0 and state.incumbent is not None
            slot = state.incumbent_slot if reuse_center else sm.slot(i)
            r = sm.single(p, slot, state.incumbent if reuse_center else None)
            stats.append(r.stats[0])
            slots.append(slot)
            truncated |= r.truncated
    m = _model.interpolate(design, [s.mean for s in stats], cfg.kappa_H)
    return P, stats, slots, m, truncated


def _mu_first(sm: _Sampler, state: EngineState, cfg: EngineConfig):
    if sm.mode is StreamMode.CRN:
        res = sm.group(state.x[None, :], [state.incumbent])
        slots = None
    else:
        slot = state.incumbent_slot if state.incumbent is not None else sm.slot(0)
        res = sm.single(state.x, slot, state.incumbent)
        slots = [slot]
    st = res.stats[0]
    B = state.B if state.B is not None else np.zeros((state.x.size, state.x.size))
    if state.pending is not None:
        s_prev, g_prev = state.pending
        B = _model.bfgs_update(B, s_prev, st.grad_mean - g_prev, cfg.kappa_H)
        state.pending = None
    state.B = B
    m = _model.LocalModel(st.mean, st.grad_mean.copy(), B.copy())
    return state.x[None, :].copy(), [st], slots, m, res.truncated


def iterate(state: EngineState, oracle: StochasticOracle, cfg: EngineConfig):
    """Run one iteration in place on ``state``; return its record.

    Raises :class:`BudgetExhausted` if a sampling batch would go over budget;
    the state is then left at the start of the unfinished iteration.
    """
    calls0 = oracle.calls
    sm = _Sampler(oracle, cfg, state)
    first = cfg.rule.order == 1
    saved_slot = state.next_slot

    try:
        if first:
            P, stats, slots, mdl, truncated = _mu_first(sm, state, cfg)
        else:
            P, stats, slots, mdl, truncated = _mu_zeroth(sm, state, cfg)

        step = solve(mdl, state.delta, cfg.kappa_fcd)
        xs = state.x + step.step

        if sm.mode is StreamMode.CRN:
            res = sm.group(np.vstack([P, xs[None, :]]), list(stats) + [None])
            stats = res.stats
            cand = stats[-1]
            fbar_0 = stats[0].mean
            cand_slot = None
        else:
            cand_slot = sm.slot(P.shape[0])
            res = sm.single(xs, cand_slot)
            cand = res.stats[0]
            fbar_0 = stats[0].mean
            stats = list(stats) + [cand]
        truncated |= res.truncated
    except BudgetExhausted:
        state.next_slot = saved_slot
        raise

    m0 = mdl.c
    ms = mdl.value(step.step)
    rho = success_ratio(cand.mean, fbar_0, ms, m0)
    gnorm = float(np.linalg.norm(mdl.g))
    accept, new_delta = tr_update(rho, gnorm, state.delta, cfg)

    has_truth = True
    try:
        f0 = oracle.f(state.x)
        fs = oracle.f(xs)
        tg = float(np.linalg.norm(oracle.grad(state.x)))
    except NotImplementedError:
        has_truth = False
        f0 = fs = tg = None

    rec = IterationRecord(
        k=state.k,
        x_center=state.x.copy(),
        delta=state.delta,
        n_per_point=[s.n for s in stats],
        work_this_iter=oracle.calls - calls0,
        rho_hat=rho,
        success=accept,
        model_grad_norm=gnorm,
        true_grad_norm=tg,
        f_est_center=fbar_0,
        f_true_center=f0,
        balance_lhs=abs((cand.mean - fs) - (fbar_0 - f0)) if has_truth else None,
        cum_work=oracle.calls,
        x_candidate=xs.copy(),
        f_est_candidate=cand.mean,
        f_true_candidate=fs,
        rho_numerator=cand.mean - fbar_0,
        model_decrease=step.model_decrease,
        truncated=truncated,
    )

    if first and accept:
        state.pending = (step.step.copy(), stats[0].grad_mean.copy())
    if sm.reuse:
        if accept:
            state.incumbent = cand
            state.incumbent_slot = cand_slot if cand_slot is not None else None
        else:
            state.incumbent = stats[0]
            state.incumbent_slot = slots[0] if slots else None
    if accept:
        state.x = xs
    state.delta = new_delta
    state.k += 1
    return rec


def resolve_kappa(oracle: StochasticOracle, cfg: EngineConfig, x0) -> float:
    """Pilot estimate ``|f(x0)| / delta0**2`` from a short billed sample."""
    ctx = StreamContext(cfg.master_seed, (int(cfg.replication), ROLE_PILOT), StreamMode.CRN)
    keys = ctx.keys(0, 0, PILOT_SAMPLES)
    if oracle.calls + PILOT_SAMPLES > cfg.budget:
        raise BudgetExhausted("budget too small for the pilot sample")
    v, _ = oracle.sample(np.asarray(x0, dtype=float)[None, :], keys, gradients=False)
    f0 = abs(float(v.mean()))
    # a vanishing pilot would make every sample size explode
    return (f0 if f0 > 1e-8 else 1.0) / cfg.delta0**2


def run(oracle: StochasticOracle, cfg: EngineConfig, x0=None) -> RunTrace:
    """Iterate until budget, ``grad_tol``, ``max_iterations`` or ``delta_min``."""
    if cfg.rule.order == 1 and not oracle.first_order:
        raise ConfigError(f"rule {cfg.rule.rule.value} needs a first-order problem")
    x = np.array(oracle.x0 if x0 is None else x0, dtype=float)
    oracle.check_point(x)
    trace = RunTrace(cfg, oracle.name)
    calls0 = oracle.calls
    # budget is counted on this run's calls only
    cfg = replace(cfg, budget=int(cfg.budget) + calls0)
    try:
        if cfg.rule.kappa_as is None:
            kappa = resolve_kappa(oracle, cfg, x)
            cfg = replace(cfg, rule=cfg.rule.with_kappa(kappa))
        trace.kappa_as = cfg.rule.kappa_as
        trace.pilot_work = oracle.calls - calls0
        state = EngineState(0, x, cfg.delta0)
        while True:
            if cfg.max_iterations is not None and state.k >= cfg.max_iterations:
                trace.termination = "max_iterations"
                break
            if state.delta < max(cfg.delta_min, 1e-300):
                trace.termination = "delta_min"
                break
            rec = iterate(state, oracle, cfg)
            rec.cum_work -= calls0
            trace.records.append(rec)
            gn = rec.true_grad_norm if rec.true_grad_norm is not None else rec.model_grad_norm
            if cfg.grad_tol is not None and gn <= cfg.grad_tol:
                trace.termination = "grad_tol"
                break
    except BudgetExhausted:
        trace.termination = "budget"
    return trace


def run_problem(spec, cfg: EngineConfig) -> RunTrace:
    from .oracle import make_problem

    return run(make_problem(spec), cfg)


def write_trace(trace: RunTrace, csv_path, json_path=None) -> None:
    """Write the trace CSV (and config snapshot JSON) via temp-file rename."""
    from .io import atomic_write

    atomic_write(csv_path, trace.to_csv())
    if json_path is not None:
        atomic_write(json_path, json.dumps(trace.snapshot(), indent=2, sort_keys=True) + "\n")
