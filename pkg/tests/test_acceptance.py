"""End-to-end acceptance checks, one test per criterion.

Each test prints a single ``ACCEPTANCE <n> PASS|FAIL`` line (visible with
``pytest -v``) and then asserts.  Criteria 7 and 8 share one benchmark table.
"""

import math
import time

import numpy as np
import pytest

from astro_tr.cli import main
from astro_tr.engine import EngineConfig, run
from astro_tr.harness import fit_slope, paired_differences, validate_variance, work_complexity
from astro_tr.model import DesignSet, coordinate_design, interpolate, poisedness, quadratic_design
from astro_tr.oracle import ProblemSpec, StreamMode, make_problem
from astro_tr.sampling import (
    Rule,
    SampleStats,
    SamplingRule,
    StreamContext,
    group_sigma,
    inflation,
    sample_adaptively,
    stop_condition,
    threshold,
)
from astro_tr.subproblem import cauchy_step

pytestmark = pytest.mark.acceptance


@pytest.fixture
def verdict(capsys):
    def report(num, ok, detail, started):
        with capsys.disabled():
            print(f"\nACCEPTANCE {num} {'PASS' if ok else 'FAIL'} ({time.perf_counter() - started:.1f}s) {detail}")
        assert ok, detail

    return report


# -- 1 ---------------------------------------------------------------------


def test_criterion_1_independent_variance(verdict):
    t0 = time.perf_counter()
    d = 3
    o = make_problem(ProblemSpec("quad-smooth", d, 1.0))
    pairs = [
        (np.zeros(d), np.full(d, 0.1)),
        (np.ones(d), np.array([0.5, -0.2, 0.0])),
        (np.array([2.0, -1.0, 0.5]), np.array([0.0, 0.0, 1.0])),
    ]
    ratios = []
    for i, (x, s) in enumerate(pairs):
        diffs = paired_differences(o, x, s, 10_000, StreamMode.INDEPENDENT, master_seed=11, tag=i)
        ratios.append(float(np.var(diffs)) / (1.0 + 1.0))  # additive noise: sigma^2(x) = 1 everywhere
    ok = all(0.9 <= r <= 1.1 for r in ratios) and time.perf_counter() - t0 < 10
    verdict(1, ok, "ratios=" + ",".join(f"{r:.4f}" for r in ratios), t0)


# -- 2 ---------------------------------------------------------------------


def test_criterion_2_lipschitz_crn_bound(verdict):
    t0 = time.perf_counter()
    d = 2
    o = make_problem(ProblemSpec("quad-lipschitz", d, 1.0))
    kfl2 = 1.0 * d * 1.0**2 / 3.0  # E|c|^2 with c_i ~ U[-1, 1]
    u = np.array([0.6, 0.8])
    reps = validate_variance(o, o.x0, [0.1 * u, 0.01 * u], 10_000, StreamMode.CRN, master_seed=5)
    ok = True
    parts = []
    for r in reps:
        bound = kfl2 * r.s_norm**2
        ok &= r.var_hat <= 1.05 * bound and r.passed
        parts.append(f"|s|={r.s_norm:g} var/bound={r.var_hat / bound:.3f}")
    ok &= time.perf_counter() - t0 < 10
    verdict(2, ok, " ".join(parts), t0)


# -- 3 ---------------------------------------------------------------------


def test_criterion_3_holder_slope(verdict):
    t0 = time.perf_counter()
    d = 3
    o = make_problem(ProblemSpec("bm-field", d, 1.0))
    norms = [0.2, 0.1, 0.05, 0.02]
    reps = validate_variance(o, o.x0, [r * o.w for r in norms], 10_000, StreamMode.CRN, master_seed=3)
    v = [r.var_hat for r in reps]
    slope = float(np.polyfit(np.log(norms), np.log(v), 1)[0])
    ok = abs(slope - 1.0) <= 0.15 and time.perf_counter() - t0 < 30
    verdict(3, ok, f"slope={slope:.4f} var=" + ",".join(f"{x:.4g}" for x in v), t0)


# -- 4 ---------------------------------------------------------------------


def test_criterion_4_crn_numerator_exact(verdict):
    t0 = time.perf_counter()
    o = make_problem(ProblemSpec("rosenbrock-smooth", 2, 1.0))
    cfg = EngineConfig(rule=SamplingRule(Rule.C0), budget=10**8, max_iterations=200, delta_min=0.0, master_seed=4)
    tr = run(o, cfg)
    err = max(abs(r.rho_numerator - (r.f_true_candidate - r.f_true_center)) for r in tr.records)
    ok = len(tr.records) == 200 and err <= 1e-10
    verdict(4, ok, f"iterations={len(tr.records)} max_err={err:.3g}", t0)


# -- 5 ---------------------------------------------------------------------


def _expected_n(rule, sigma_hat, delta, lam):
    # smallest integer n >= n_min with n >= s^2 lam / (kappa^2 delta^(2 beta))
    need = threshold(rule, sigma_hat, delta, lam)
    return max(rule.n_min, math.ceil(need))


def test_criterion_5_minimality_and_closed_form(verdict):
    t0 = time.perf_counter()
    rng = np.random.default_rng(55)
    names = [r for r in Rule]
    bad = 0
    for _ in range(1000):
        rule = SamplingRule(
            names[rng.integers(len(names))],
            sigma0=float(rng.uniform(0.05, 2.0)),
            kappa_as=float(rng.uniform(0.2, 5.0)),
            n_min=int(rng.integers(2, 10)),
        )
        sigma_hat = float(rng.uniform(0.0, 3.0))
        delta = float(rng.uniform(0.2, 2.0))
        lam = inflation(int(rng.integers(0, 10**4)))
        n = _expected_n(rule, sigma_hat, delta, lam)
        if not stop_condition(rule, n, sigma_hat, delta, lam):
            bad += 1
        if n > rule.n_min and stop_condition(rule, n - 1, sigma_hat, delta, lam):
            bad += 1

    # realized sampling: C1 hits its closed form, other rules stop at the first passing n
    closed_bad = minimal_bad = 0
    o = make_problem(ProblemSpec("quad-smooth", 2, 1.0, parameters={"slope_scale": 0.5}))
    P = np.array([[0.3, -0.4], [0.5, -0.4]])
    for i in range(200):
        sigma0 = float(rng.uniform(0.1, 2.0))
        kappa = float(rng.uniform(0.5, 4.0))
        lam = inflation(int(rng.integers(2, 1000)))
        rule = SamplingRule(Rule.C1, sigma0=sigma0, kappa_as=kappa)
        res = sample_adaptively(P, rule, 0.5, lam, StreamContext(i, [0, 0]), o)
        if res.n != [max(rule.n_min, math.ceil(sigma0**2 * lam / kappa**2))] * 2:
            closed_bad += 1
        name = names[i % 5]  # A0..B1
        rule = SamplingRule(name, sigma0=0.05, kappa_as=kappa)
        delta = float(rng.uniform(0.4, 1.5))
        res = sample_adaptively(P, rule, delta, lam, StreamContext(i, [0, 1]), o)
        n = res.n[0]
        if not res.checks[-1][2]:
            minimal_bad += 1
        elif n <= 100 and n > rule.n_min:
            # statistics at n - 1 on the same streams must fail the rule
            v, g = o.sample(P, StreamContext(i, [0, 1]).keys(0, 0, n - 1), gradients=rule.order == 1)
            stats = [SampleStats().merge(v[:, j], None if g is None else g[:, j, :]) for j in range(2)]
            if stop_condition(rule, n - 1, group_sigma(rule.rule, stats), delta, lam):
                minimal_bad += 1
    elapsed = time.perf_counter() - t0
    ok = bad == 0 and closed_bad == 0 and minimal_bad == 0 and elapsed < 5
    verdict(5, ok, f"threshold_violations={bad} closed_form_mismatches={closed_bad} non_minimal={minimal_bad}", t0)


# -- 6 ---------------------------------------------------------------------


@pytest.mark.slow
def test_criterion_6_convergence(verdict):
    t0 = time.perf_counter()
    hits, med = 0, []
    for seed in range(10):
        o = make_problem(ProblemSpec("quad-smooth", 5, 1.0))
        cfg = EngineConfig(rule=SamplingRule(Rule.C1), budget=10**6, master_seed=seed)
        tr = run(o, cfg)
        g = [r.true_grad_norm for r in tr.records]
        hits += min(g) <= 1e-2
        tail = tr.records[-max(1, len(tr.records) // 10):]
        med.append(float(np.median([r.delta for r in tail])))
    ok = hits >= 9 and all(m <= 0.1 * 1.0 for m in med) and time.perf_counter() - t0 < 120
    verdict(6, ok, f"seeds_reached={hits}/10 max_tail_median_delta={max(med):.3g}", t0)


# -- 7 and 8 ---------------------------------------------------------------

EPS = (0.4, 0.2, 0.1, 0.05)
RULES = ("A1", "B1", "C1", "A0", "B0", "C0")


@pytest.fixture(scope="module")
def complexity_table():
    # matched noise: noise variance grows with |x|^2 like the objective. The
    # tighter criticality constant keeps the radius in step with the gradient
    spec = ProblemSpec("quad-smooth", 3, 1.0, parameters={"slope_scale": 1.0})
    template = EngineConfig(rule=SamplingRule(Rule.C1), mu=1.0, budget=2 * 10**7, master_seed=0)
    t0 = time.perf_counter()
    table = work_complexity(spec, RULES, EPS, 20, template)
    return table, time.perf_counter() - t0


@pytest.mark.slow
def test_criterion_7_complexity_ordering(verdict, complexity_table):
    table, elapsed = complexity_table
    t0 = time.perf_counter() - elapsed
    slopes = {r: fit_slope(table, r).slope for r in RULES}
    worst = max(table.censoring(r, e) for r in RULES for e in EPS)
    ok = (
        slopes["A1"] > slopes["B1"] > slopes["C1"]
        and slopes["A0"] > slopes["B0"] > slopes["C0"]
        and worst < 0.2
        and 1.3 <= slopes["C1"] <= 3.5
        and elapsed < 15 * 60
    )
    detail = " ".join(f"{r}={s:.3f}" for r, s in slopes.items()) + f" max_censoring={worst:.2f}"
    verdict(7, ok, detail, t0)


@pytest.mark.slow
def test_criterion_8_crn_benefit(verdict, complexity_table):
    table, _ = complexity_table
    t0 = time.perf_counter()
    c1, a1 = table.median_work("C1", 0.05), table.median_work("A1", 0.05)
    ok = c1 <= 0.5 * a1
    verdict(8, ok, f"median_W C1={c1:.0f} A1={a1:.0f} ratio={c1 / a1:.4f}", t0)


# -- 9 ---------------------------------------------------------------------

CLI_CONFIG = """\
[problem]
name = quad-smooth
dimension = 3
slope_scale = 1.0

[engine]
rule = C1
mu = 1.0
budget = 200000

[harness]
rules = A1,B1,C1,A0,C0
eps_grid = 0.4,0.2,0.1
replications = 3
"""


def test_criterion_9_reproducible_cli(verdict, tmp_path):
    t0 = time.perf_counter()
    cfg = tmp_path / "c.ini"
    cfg.write_text(CLI_CONFIG)
    same = []
    for cmd, artifact in (("run", "trace.csv"), ("bench", "work.csv")):
        outs = []
        for tag in ("a", "b"):
            out = tmp_path / f"{cmd}-{tag}"
            rc = main([cmd, "--config", str(cfg), "--out", str(out), "--seed", "17", "--quiet"])
            outs.append((rc, (out / artifact).read_bytes()))
        same.append(outs[0][0] == outs[1][0] == 0 and outs[0][1] == outs[1][1] and len(outs[0][1]) > 0)
    verdict(9, all(same), f"run_identical={same[0]} bench_identical={same[1]}", t0)


# -- 10 --------------------------------------------------------------------


def test_criterion_10_subproblem_and_model(verdict):
    t0 = time.perf_counter()
    rng = np.random.default_rng(10)
    cauchy_bad = 0
    for _ in range(10_000):
        d = int(rng.integers(1, 8))
        g = rng.normal(size=d) * 10.0 ** rng.uniform(-3, 2)
        A = rng.normal(size=(d, d)) * rng.choice([0.0, 0.1, 1.0, 10.0])
        H = A + A.T
        delta = float(10.0 ** rng.uniform(-3, 1))
        s = cauchy_step(g, H, delta)
        dec = -(g @ s) - 0.5 * s @ H @ s
        gn, hn = float(np.linalg.norm(g)), float(np.linalg.norm(H, 2))
        need = 0.5 * gn * min(gn / hn if hn > 0 else math.inf, delta)
        if dec < need * (1 - 1e-12) - 1e-300 or np.linalg.norm(s) > delta * (1 + 1e-12):
            cauchy_bad += 1

    interp_err = 0.0
    for _ in range(200):
        d = int(rng.integers(1, 7))
        x = rng.normal(size=d)
        delta = float(10.0 ** rng.uniform(-2, 1))
        for D in (coordinate_design(x, delta), quadratic_design(x, delta)):
            P = D.all_points()
            vals = rng.normal(size=len(P)) * 10.0 ** rng.uniform(-2, 2)
            m = interpolate(D, vals, kappa_H=math.inf)
            fit = np.array([m.value(p - D.center) for p in P])
            interp_err = max(interp_err, float(np.max(np.abs(fit - vals)) / max(1.0, np.max(np.abs(vals)))))

    lam = [poisedness(coordinate_design(rng.normal(size=d), float(rng.uniform(0.01, 10)))).lam for d in range(1, 21)]
    # the same geometry without the coordinate tag, scanned numerically
    C = coordinate_design(np.zeros(3), 0.7)
    scanned = poisedness(DesignSet(C.center, C.points, C.delta)).lam

    elapsed = time.perf_counter() - t0
    ok = cauchy_bad == 0 and interp_err <= 1e-9 and all(v == 1.0 for v in lam) and abs(scanned - 1) < 1e-9 and elapsed < 10
    verdict(10, ok, f"cauchy_violations={cauchy_bad} interp_rel_err={interp_err:.2e} lambda_max={max(lam)} scanned={scanned:.12f}", t0)
