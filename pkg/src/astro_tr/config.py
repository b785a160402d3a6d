"""INI / JSON configuration with sections [problem], [engine], [sampling], [harness].

Grammar: one ``key = value`` per line.  Lists are comma separated.  Problem
parameters (``slope_scale``, ``penalty``, ...) go in [problem] next to the
common keys and are checked against the chosen problem's parameter list.
"""

from __future__ import annotations

import configparser
import json
from dataclasses import dataclass, field, fields
from pathlib import Path

from .engine import EngineConfig
from .errors import AstroError, ConfigError
from .oracle import PROBLEMS, ProblemSpec, Regularity, StreamMode, StreamPolicy
from .sampling import InflationSchedule, SamplingRule, parse_rule

SECTIONS = ("problem", "engine", "sampling", "harness")

PROBLEM_KEYS = {"name", "dimension", "noise_scale", "regularity", "x0"}
ENGINE_KEYS = {
    "delta0",
    "delta_max",
    "eta",
    "gamma1",
    "gamma2",
    "mu",
    "rule",
    "budget",
    "grad_tol",
    "master_seed",
    "replication",
    "max_iterations",
    "delta_min",
    "kappa_H",
    "kappa_fcd",
    "model",
    "stream_mode",
    "aggressive_reuse",
}
SAMPLING_KEYS = {"sigma0", "kappa_as", "n_min", "n_cap", "lambda0", "eps_lambda"}
HARNESS_KEYS = {"rules", "eps_grid", "replications", "x", "s_norms", "s_direction", "n", "mode", "workers"}


@dataclass(frozen=True)
class HarnessParams:
    rules: tuple = ("A1", "B1", "C1")
    eps_grid: tuple = (0.4, 0.2, 0.1, 0.05)
    replications: int = 10
    x: tuple | None = None
    s_norms: tuple = (0.1, 0.01)
    s_direction: tuple | None = None
    n: int = 10_000
    mode: str = "crn"
    workers: int | None = None

    def __post_init__(self):
        if self.replications < 3:
            raise ConfigError("harness.replications must be >= 3")
        if any(b >= a for a, b in zip(self.eps_grid, self.eps_grid[1:])) or not self.eps_grid:
            raise ConfigError("harness.eps_grid must be strictly decreasing")
        if any(e <= 0 for e in self.eps_grid):
            raise ConfigError("harness.eps_grid entries must be > 0")
        if self.n < 1000:
            raise ConfigError("harness.n must be >= 1000")
        if self.mode not in ("crn", "independent"):
            raise ConfigError("harness.mode must be crn or independent")
        if self.workers is not None and self.workers < 1:
            raise ConfigError("harness.workers must be >= 1")
        for r in self.rules:
            parse_rule(r)


@dataclass(frozen=True)
class Config:
    problem: ProblemSpec
    engine: EngineConfig
    harness: HarnessParams = field(default_factory=HarnessParams)


# --------------------------------------------------------------------------
# value parsing
# --------------------------------------------------------------------------


def _num(key, text, kind=float):
    try:
        v = kind(float(text)) if kind is int else kind(text)
    except (TypeError, ValueError):
        raise ConfigError(f"{key}: cannot parse {text!r} as {kind.__name__}") from None
    if kind is int and float(text) != v:
        raise ConfigError(f"{key}: expected an integer, got {text!r}")
    return v


def _opt(key, text, kind=float):
    if text is None or str(text).strip().lower() in ("", "none"):
        return None
    return _num(key, text, kind)


def _list(key, text, kind=float):
    if text is None or str(text).strip() == "":
        return ()
    return tuple(_num(key, t.strip(), kind) for t in str(text).split(",") if t.strip())


def _bool(key, text):
    t = str(text).strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"{key}: expected a boolean, got {text!r}")


def _fmt_list(values):
    return ",".join(repr(float(v)) if isinstance(v, float) else str(v) for v in values)


# --------------------------------------------------------------------------
# sections <-> Config
# --------------------------------------------------------------------------


def from_sections(sections: dict) -> Config:
    sections = {k.lower(): dict(v) for k, v in sections.items()}
    extra = set(sections) - set(SECTIONS)
    if extra:
        raise ConfigError(f"unknown section(s): {', '.join(sorted(extra))}")
    p = {k: str(v) for k, v in sections.get("problem", {}).items()}
    e = {k: str(v) for k, v in sections.get("engine", {}).items()}
    s = {k: str(v) for k, v in sections.get("sampling", {}).items()}
    h = {k: str(v) for k, v in sections.get("harness", {}).items()}

    if "name" not in p:
        raise ConfigError("problem.name is required")
    if "rule" not in e:
        raise ConfigError("engine.rule is required")
    name = p["name"].strip()
    if name not in PROBLEMS:
        raise ConfigError(f"problem.name: unknown problem {name!r}")
    allowed = PROBLEM_KEYS | set(PROBLEMS[name].defaults)
    for sec, have, ok in (("problem", p, allowed), ("engine", e, ENGINE_KEYS), ("sampling", s, SAMPLING_KEYS), ("harness", h, HARNESS_KEYS)):
        bad = sorted(set(have) - ok)
        if bad:
            raise ConfigError(f"unknown key {sec}.{bad[0]}")

    try:
        reg = p.get("regularity")
        x0 = _list("problem.x0", p.get("x0"))
        spec = ProblemSpec(
            name=name,
            dimension=_num("problem.dimension", p.get("dimension", "2"), int),
            noise_scale=_num("problem.noise_scale", p.get("noise_scale", "1.0")),
            regularity=Regularity(reg.strip()) if reg else None,
            parameters={k: _num(f"problem.{k}", v) for k, v in sorted(p.items()) if k not in PROBLEM_KEYS},
            x0=x0 or None,
        )
        rule = SamplingRule(
            rule=parse_rule(e["rule"].strip()),
            sigma0=_num("sampling.sigma0", s.get("sigma0", "1.0")),
            kappa_as=_opt("sampling.kappa_as", s.get("kappa_as")),
            n_min=_num("sampling.n_min", s.get("n_min", "2"), int),
            n_cap=_num("sampling.n_cap", s.get("n_cap", "1000000"), int),
        )
        infl = InflationSchedule(
            lambda0=_num("sampling.lambda0", s.get("lambda0", "2.0")),
            eps_lambda=_num("sampling.eps_lambda", s.get("eps_lambda", "0.5")),
        )
        mode = e.get("stream_mode", "default").strip().lower()
        reuse = _bool("engine.aggressive_reuse", e.get("aggressive_reuse", "false"))
        if mode == "default":
            policy = None if not reuse else StreamPolicy(rule.rule.default_mode, True)
        elif mode in ("crn", "independent"):
            policy = StreamPolicy(StreamMode(mode), reuse)
        else:
            raise ConfigError("engine.stream_mode must be default, crn or independent")
        d = EngineConfig()
        engine = EngineConfig(
            delta0=_num("engine.delta0", e.get("delta0", d.delta0)),
            delta_max=_num("engine.delta_max", e.get("delta_max", d.delta_max)),
            eta=_num("engine.eta", e.get("eta", d.eta)),
            gamma1=_num("engine.gamma1", e.get("gamma1", d.gamma1)),
            gamma2=_num("engine.gamma2", e.get("gamma2", d.gamma2)),
            mu=_num("engine.mu", e.get("mu", d.mu)),
            rule=rule,
            inflation=infl,
            stream_policy=policy,
            budget=_num("engine.budget", e.get("budget", d.budget), int),
            grad_tol=_opt("engine.grad_tol", e.get("grad_tol")),
            master_seed=_num("engine.master_seed", e.get("master_seed", "0"), int),
            replication=_num("engine.replication", e.get("replication", "0"), int),
            max_iterations=_opt("engine.max_iterations", e.get("max_iterations"), int),
            delta_min=_num("engine.delta_min", e.get("delta_min", d.delta_min)),
            kappa_H=_num("engine.kappa_H", e.get("kappa_H", d.kappa_H)),
            kappa_fcd=_num("engine.kappa_fcd", e.get("kappa_fcd", d.kappa_fcd)),
            model=e.get("model", d.model).strip(),
        )
        hd = HarnessParams()
        harness = HarnessParams(
            rules=tuple(parse_rule(r.strip()).value for r in h.get("rules", ",".join(hd.rules)).split(",") if r.strip()),
            eps_grid=_list("harness.eps_grid", h.get("eps_grid", _fmt_list(hd.eps_grid))),
            replications=_num("harness.replications", h.get("replications", hd.replications), int),
            x=_list("harness.x", h.get("x")) or None,
            s_norms=_list("harness.s_norms", h.get("s_norms", _fmt_list(hd.s_norms))),
            s_direction=_list("harness.s_direction", h.get("s_direction")) or None,
            n=_num("harness.n", h.get("n", hd.n), int),
            mode=h.get("mode", hd.mode).strip().lower(),
            workers=_opt("harness.workers", h.get("workers"), int),
        )
    except ConfigError:
        raise
    except (AstroError, ValueError) as exc:
        raise ConfigError(str(exc)) from None
    return Config(spec, engine, harness)


def to_sections(cfg: Config) -> dict:
    """Inverse of :func:`from_sections` (all values as strings)."""
    p, e, r = cfg.problem, cfg.engine, cfg.engine.rule
    problem = {"name": p.name, "dimension": str(p.dimension), "noise_scale": repr(float(p.noise_scale))}
    if p.regularity is not None:
        problem["regularity"] = p.regularity.value
    if p.x0 is not None:
        problem["x0"] = _fmt_list([float(v) for v in p.x0])
    problem.update({k: repr(float(v)) for k, v in sorted(p.parameters.items())})
    pol = e.stream_policy
    engine = {
        "rule": r.rule.value,
        "stream_mode": "default" if pol is None else pol.mode.value,
        "aggressive_reuse": str(bool(pol and pol.aggressive_reuse)).lower(),
    }
    for f in fields(EngineConfig):
        if f.name in ("rule", "inflation", "stream_policy"):
            continue
        v = getattr(e, f.name)
        engine[f.name] = "none" if v is None else (repr(float(v)) if isinstance(v, float) else str(v))
    sampling = {
        "sigma0": repr(float(r.sigma0)),
        "kappa_as": "none" if r.kappa_as is None else repr(float(r.kappa_as)),
        "n_min": str(r.n_min),
        "n_cap": str(r.n_cap),
        "lambda0": repr(float(e.inflation.lambda0)),
        "eps_lambda": repr(float(e.inflation.eps_lambda)),
    }
    h = cfg.harness
    harness = {
        "rules": ",".join(h.rules),
        "eps_grid": _fmt_list([float(v) for v in h.eps_grid]),
        "replications": str(h.replications),
        "s_norms": _fmt_list([float(v) for v in h.s_norms]),
        "n": str(h.n),
        "mode": h.mode,
    }
    if h.x is not None:
        harness["x"] = _fmt_list([float(v) for v in h.x])
    if h.s_direction is not None:
        harness["s_direction"] = _fmt_list([float(v) for v in h.s_direction])
    if h.workers is not None:
        harness["workers"] = str(h.workers)
    return {"problem": problem, "engine": engine, "sampling": sampling, "harness": harness}


def apply_overrides(sections: dict, overrides) -> dict:
    out = {k: dict(v) for k, v in sections.items()}
    for item in overrides or ():
        if "=" not in item:
            raise ConfigError(f"override {item!r} is not section.key=value")
        lhs, value = item.split("=", 1)
        if "." not in lhs:
            raise ConfigError(f"override {item!r} is not section.key=value")
        sec, key = lhs.strip().split(".", 1)
        sec = sec.lower()
        if sec not in SECTIONS:
            raise ConfigError(f"unknown section {sec!r} in override {item!r}")
        out.setdefault(sec, {})[key.strip()] = value.strip()
    return out


def read_sections(path) -> dict:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    text = path.read_text()
    if path.suffix.lower() == ".json":
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: {exc}") from None
        data = data.get("config", data)
        return {k: {kk: "none" if vv is None else str(vv) for kk, vv in v.items()} for k, v in data.items()}
    cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    cp.optionxform = str  # keys such as kappa_H are case sensitive
    try:
        cp.read_string(text, source=str(path))
    except configparser.Error as exc:
        raise ConfigError(f"{path}: {exc}") from None
    return {s: dict(cp.items(s)) for s in cp.sections()}


def parse_config(path=None, overrides=()) -> Config:
    """Read, override and validate a configuration file."""
    sections = read_sections(path) if path is not None else {}
    return from_sections(apply_overrides(sections, overrides))


def to_ini(cfg: Config) -> str:
    lines = []
    for sec, items in to_sections(cfg).items():
        lines.append(f"[{sec}]")
        lines.extend(f"{k} = {v}" for k, v in items.items())
        lines.append("")
    return "\n".join(lines)
