import math
from types import SimpleNamespace

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from astro_tr.engine import EngineConfig
from astro_tr.errors import EstimationError, UsageError
from astro_tr.harness import (
    ExperimentTable,
    Row,
    bootstrap_variance_width,
    emit_report,
    fit_slope,
    hitting_times,
    paired_differences,
    validate_variance,
    work_complexity,
)
from astro_tr.oracle import ProblemSpec, StreamMode, make_problem
from astro_tr.sampling import SamplingRule, parse_rule


def fake_trace(norms, work):
    recs = [SimpleNamespace(k=k, true_grad_norm=g, cum_work=w) for k, (g, w) in enumerate(zip(norms, work))]
    return SimpleNamespace(records=recs)


# -- hitting times ---------------------------------------------------------


def test_hitting_time_example():
    tr = fake_trace([1.0, 0.5, 0.05], [10, 30, 90])
    (h,) = hitting_times(tr, [0.1])
    assert (h.t_eps, h.w_eps) == (2, 90)


def test_hitting_time_at_start_and_never():
    tr = fake_trace([1.0, 0.5, 0.05], [10, 30, 90])
    hi, lo = hitting_times(tr, [2.0, 0.01])
    assert hi.t_eps == 0 and hi.w_eps == 10
    assert not lo.reached and lo.w_eps is None


def test_hitting_times_need_true_gradients():
    tr = fake_trace([None], [5])
    with pytest.raises(UsageError):
        hitting_times(tr, [0.1])


@given(st.lists(st.floats(1e-3, 10.0), min_size=1, max_size=30))
def test_hitting_times_monotone_in_eps(norms):
    work = np.cumsum(np.arange(1, len(norms) + 1)).tolist()
    hits = hitting_times(fake_trace(norms, work), [1.0, 0.5, 0.1, 0.01])
    ts = [h.t_eps if h.reached else math.inf for h in hits]
    assert ts == sorted(ts)


# -- tables and slopes -----------------------------------------------------


def table_from(fn, eps=(0.4, 0.2, 0.1, 0.05), reps=5, rule="C1"):
    t = ExperimentTable()
    for e in eps:
        for r in range(reps):
            t.add(Row(rule, e, r, 1, fn(e, r)))
    return t


def test_slope_of_inverse_square():
    t = table_from(lambda e, r: e**-2)
    assert fit_slope(t, "C1").slope == pytest.approx(2.0, abs=1e-9)


def test_slope_with_log_factor_inflated():
    t = table_from(lambda e, r: e**-4 * math.log(1 / e) ** 2)
    s = fit_slope(t, "C1").slope
    assert 4.0 < s < 5.2


def test_censored_level_excluded():
    t = table_from(lambda e, r: e**-2, eps=(0.4, 0.2, 0.1))
    for r in range(5):
        t.add(Row("C1", 0.05, r, None, None))
    fit = fit_slope(t, "C1")
    assert fit.epsilons == (0.4, 0.2, 0.1)
    assert t.censoring("C1", 0.05) == 1.0
    assert math.isnan(t.median_work("C1", 0.05))


def test_censored_rows_left_out_of_median():
    t = table_from(lambda e, r: 100, eps=(0.1,), reps=3)
    t.add(Row("C1", 0.1, 3, None, None))
    assert t.median_work("C1", 0.1) == 100.0
    assert t.censoring("C1", 0.1) == 0.25


def test_too_few_levels():
    t = table_from(lambda e, r: 1.0 / e, eps=(0.4, 0.2))
    with pytest.raises(EstimationError):
        fit_slope(t, "C1")


def test_duplicate_row_rejected():
    t = ExperimentTable()
    t.add(Row("A1", 0.1, 0, 1, 10))
    with pytest.raises(UsageError):
        t.add(Row("A1", 0.1, 0, 2, 20))


def test_table_csv_layout():
    t = ExperimentTable()
    t.add(Row("B1", 0.1, 1, None, None))
    t.add(Row("B1", 0.2, 0, 3, 40))
    lines = t.to_csv().splitlines()
    assert lines[0] == "rule,epsilon,replication,t_eps,w_eps,censored"
    assert lines[1] == "B1,0.2,0,3,40,0"
    assert lines[2] == "B1,0.1,1,,,1"


# -- variance validation ---------------------------------------------------


def test_independent_variance_matches_sum():
    spec = ProblemSpec("quad-smooth", 3, 1.0)
    reps = validate_variance(spec, np.zeros(3), [np.full(3, 0.3)], 10_000, StreamMode.INDEPENDENT)
    (r,) = reps
    assert r.bound_or_target == pytest.approx(2.0)
    assert r.passed


def test_crn_zero_step_gives_zero():
    o = make_problem(ProblemSpec("quad-lipschitz", 2, 1.0))
    (r,) = validate_variance(o, o.x0, [np.zeros(2)], 1000, StreamMode.CRN)
    assert r.var_hat == 0.0 and r.passed


def test_crn_additive_noise_cancels():
    o = make_problem(ProblemSpec("quad-smooth", 2, 1.0))
    d = paired_differences(o, o.x0, np.array([0.1, -0.2]), 500, StreamMode.CRN)
    assert np.ptp(d) < 1e-12


@pytest.mark.parametrize("s_norm", [0.1, 0.05, 0.01])
def test_crn_beats_independent_on_lipschitz(s_norm):
    o = make_problem(ProblemSpec("quad-lipschitz", 2, 1.0))
    s = s_norm * np.array([0.6, 0.8])
    crn = np.var(paired_differences(o, o.x0, s, 4000, StreamMode.CRN))
    ind = np.var(paired_differences(o, o.x0, s, 4000, StreamMode.INDEPENDENT))
    assert crn < ind


def test_validate_requires_large_n():
    with pytest.raises(UsageError):
        validate_variance(ProblemSpec("quad-smooth", 2, 1.0), np.zeros(2), [np.ones(2)], 999, "crn")


def test_bootstrap_width_halves_when_n_quadruples():
    rng = np.random.default_rng(3)
    w1 = bootstrap_variance_width(rng.normal(size=2000), resamples=400)
    w4 = bootstrap_variance_width(rng.normal(size=8000), resamples=400)
    assert 1.7 <= w1 / w4 <= 2.3


# -- reports ---------------------------------------------------------------


def test_emit_empty_table(tmp_path):
    paths = emit_report(ExperimentTable(), tmp_path, "work")
    assert [p.name for p in paths] == ["work.csv"]
    assert (tmp_path / "work.csv").read_text() == "rule,epsilon,replication,t_eps,w_eps,censored\n"


def test_emit_two_rules_deterministic(tmp_path):
    t = table_from(lambda e, r: int(e**-2) + r)
    for row in table_from(lambda e, r: int(e**-3) + r, rule="A1").rows:
        t.add(row)
    a = emit_report(t, tmp_path / "a", "work")
    b = emit_report(t, tmp_path / "b", "work")
    assert {p.name for p in a} == {"work.csv", "work.svg"}
    for pa, pb in zip(a, b):
        assert pa.read_bytes() == pb.read_bytes()
    svg = (tmp_path / "a" / "work.svg").read_text()
    assert "A1" in svg and "C1" in svg


def test_emit_variance_csv(tmp_path):
    reps = validate_variance(ProblemSpec("quad-smooth", 2, 1.0), np.zeros(2), [np.full(2, 0.1)], 1000, "independent")
    (p,) = emit_report(reps, tmp_path, "variance")
    lines = p.read_text().splitlines()
    assert lines[0] == "x,s_norm,mode,n,var_hat,bound,pass"
    assert len(lines) == 2


# -- complexity driver -----------------------------------------------------


def small_template(**kw):
    base = dict(rule=SamplingRule(parse_rule("C1")), budget=20_000, mu=1.0, max_iterations=200)
    base.update(kw)
    return EngineConfig(**base)


def test_work_complexity_deterministic():
    spec = ProblemSpec("quad-smooth", 2, 1.0, parameters={"slope_scale": 1.0})
    a = work_complexity(spec, ["C1"], [0.4, 0.2, 0.1], 5, small_template(), workers=1)
    b = work_complexity(spec, ["C1"], [0.4, 0.2, 0.1], 5, small_template(), workers=2)
    assert a.to_csv() == b.to_csv()
    assert len(a.rows) == 15
    assert a.metadata["replications"] == 5


def test_zero_noise_replications_identical():
    spec = ProblemSpec("quad-smooth", 2, 0.0)
    t = work_complexity(spec, ["B1"], [0.4, 0.2, 0.1], 3, small_template(), workers=1)
    for e in (0.4, 0.2, 0.1):
        assert len({r.w_eps for r in t.cell("B1", e)}) == 1


def test_work_complexity_rejects_bad_grid():
    spec = ProblemSpec("quad-smooth", 2, 1.0)
    with pytest.raises(UsageError):
        work_complexity(spec, ["C1"], [0.1, 0.2], 3, small_template())
    with pytest.raises(UsageError):
        work_complexity(spec, ["C1"], [0.2, 0.1], 2, small_template())


@settings(max_examples=30, deadline=None)
@given(st.floats(0.5, 4.0), st.floats(0.1, 10.0))
def test_slope_recovers_power_law(p, c):
    t = table_from(lambda e, r: c * e**-p)
    assert fit_slope(t, "C1").slope == pytest.approx(p, abs=1e-8)
