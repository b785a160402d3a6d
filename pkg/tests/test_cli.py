import json
import subprocess
import sys

import pytest

from astro_tr.cli import build_parser, main
from astro_tr.config import from_sections, parse_config, to_ini, to_sections
from astro_tr.engine import TRACE_COLUMNS
from astro_tr.errors import ConfigError

MINIMAL = """\
[problem]
name = quad-smooth
dimension = 2

[engine]
rule = C1
budget = 20000
max_iterations = 30
"""

BENCH = """\
[problem]
name = quad-smooth
dimension = 2
slope_scale = 1.0

[engine]
rule = C1
budget = 20000
mu = 1.0

[harness]
rules = C1,A1
eps_grid = 0.4,0.2,0.1
replications = 3
workers = 1
"""


@pytest.fixture
def ini(tmp_path):
    def write(text, name="cfg.ini"):
        p = tmp_path / name
        p.write_text(text)
        return str(p)

    return write


def test_minimal_file_gets_defaults(ini):
    cfg = parse_config(ini(MINIMAL))
    assert cfg.engine.eta == 0.1 and cfg.engine.gamma1 == 1.5 and cfg.engine.gamma2 == 0.75
    assert cfg.engine.delta0 == 1.0 and cfg.engine.mu == 100.0
    assert cfg.problem.noise_scale == 1.0
    assert cfg.engine.rule.sigma0 == 1.0 and cfg.engine.rule.kappa_as is None


def test_override_beats_file(ini):
    cfg = parse_config(ini(MINIMAL), ["engine.eta=0.2", "problem.dimension=4"])
    assert cfg.engine.eta == 0.2
    assert cfg.problem.dimension == 4


@pytest.mark.parametrize(
    "override",
    ["engine.gamma2=1.2", "engine.gamma1=0.9", "engine.eta=1.5", "engine.colour=red", "problem.depth=3", "nosuch.key=1", "noequals"],
)
def test_invalid_config_rejected(ini, override):
    with pytest.raises(ConfigError):
        parse_config(ini(MINIMAL), [override])


def test_missing_required_keys():
    with pytest.raises(ConfigError):
        from_sections({"problem": {"name": "quad-smooth"}})
    with pytest.raises(ConfigError):
        from_sections({"engine": {"rule": "C1"}})


def test_sections_round_trip(ini):
    cfg = parse_config(ini(BENCH), ["engine.grad_tol=0.01", "sampling.kappa_as=2.5", "engine.stream_mode=independent"])
    again = from_sections(to_sections(cfg))
    assert again == cfg
    assert parse_config(ini(to_ini(cfg), "again.ini")) == cfg


def test_json_config_accepted(ini, tmp_path):
    cfg = parse_config(ini(MINIMAL))
    p = tmp_path / "c.json"
    p.write_text(json.dumps({"config": to_sections(cfg)}))
    assert parse_config(str(p)) == cfg


def test_parser_has_three_commands():
    p = build_parser()
    for cmd in ("run", "bench", "validate"):
        assert p.parse_args([cmd]).command == cmd


def test_run_writes_trace(ini, tmp_path):
    out = tmp_path / "out"
    assert main(["run", "--config", ini(MINIMAL), "--out", str(out), "--quiet"]) == 0
    lines = (out / "trace.csv").read_text().splitlines()
    assert lines[0] == ",".join(TRACE_COLUMNS)
    assert len(lines) > 1
    snap = json.loads((out / "config.json").read_text())
    assert snap["config"]["engine"]["rule"] == "C1"
    # the snapshot can be fed back in
    assert main(["run", "--config", str(out / "config.json"), "--out", str(tmp_path / "o2"), "--quiet"]) == 0
    assert (tmp_path / "o2" / "trace.csv").read_bytes() == (out / "trace.csv").read_bytes()


def test_config_error_exit_code(ini, tmp_path, capsys):
    rc = main(["run", "--config", ini(MINIMAL), "--out", str(tmp_path / "o"), "--set", "engine.gamma2=1.2"])
    assert rc == 2
    assert "gamma2" in capsys.readouterr().err
    assert not (tmp_path / "o" / "trace.csv").exists()


def test_missing_file_exit_code(tmp_path):
    assert main(["run", "--config", str(tmp_path / "nope.ini"), "--out", str(tmp_path)]) == 2


def test_validate_writes_variance(ini, tmp_path):
    text = MINIMAL.replace("name = quad-smooth", "name = quad-lipschitz") + "\n[harness]\nn = 1000\nmode = crn\n"
    out = tmp_path / "v"
    assert main(["validate", "--config", ini(text), "--out", str(out), "--quiet"]) == 0
    lines = (out / "variance.csv").read_text().splitlines()
    assert lines[0] == "x,s_norm,mode,n,var_hat,bound,pass"
    assert len(lines) == 3


def test_bench_writes_table_and_plot(ini, tmp_path):
    out = tmp_path / "b"
    assert main(["bench", "--config", ini(BENCH), "--out", str(out), "--quiet"]) == 0
    assert (out / "work.csv").read_text().startswith("rule,epsilon,replication,t_eps,w_eps,censored\n")
    assert (out / "work.svg").read_text().startswith("<svg") or "<svg" in (out / "work.svg").read_text()


@pytest.mark.parametrize("cmd,artifact", [("run", "trace.csv"), ("bench", "work.csv")])
def test_repeat_is_byte_identical(ini, tmp_path, cmd, artifact):
    path = ini(BENCH)
    for tag in ("a", "b"):
        assert main([cmd, "--config", path, "--out", str(tmp_path / tag), "--seed", "7", "--quiet"]) == 0
    assert (tmp_path / "a" / artifact).read_bytes() == (tmp_path / "b" / artifact).read_bytes()


def test_seed_changes_output(ini, tmp_path):
    path = ini(BENCH.replace("slope_scale = 1.0", "slope_scale = 1.0\nnoise_scale = 1.0"))
    for seed in ("1", "2"):
        main(["run", "--config", path, "--out", str(tmp_path / seed), "--seed", seed, "--quiet"])
    assert (tmp_path / "1" / "trace.csv").read_bytes() != (tmp_path / "2" / "trace.csv").read_bytes()


def test_module_entry_point(ini, tmp_path):
    r = subprocess.run(
        [sys.executable, "-m", "astro_tr.cli", "run", "--config", ini(MINIMAL), "--out", str(tmp_path / "m")],
        capture_output=True,
        text=True,
    )
    assert r.returncode == 0, r.stderr
    assert "iterations=" in r.stdout
