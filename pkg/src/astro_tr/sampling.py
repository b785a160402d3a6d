"""Streaming moments and adaptive sample-size rules.

Each rule stops sampling at the first ``n`` for which the estimated standard
error, floored at ``sigma0``, drops below ``kappa_as * delta**beta / sqrt(lambda_k)``.
The exponent ``beta`` depends on the rule:

====  =====  ========================================
rule  beta   sigma estimate
====  =====  ========================================
A0    2      sigma_F of the point
B0    3/2    max sigma_F over the CRN group
C0    1      max sigma_F over the CRN group
A1    2      max(sigma_F, sigma_G) of the point
B1    1      max sigma_G over the CRN group
C1    0      none (closed form ``sigma0**2 lambda / kappa**2``)
====  =====  ========================================
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from .errors import BudgetExhausted, ConfigError, InputError, UsageError
from .oracle import Observation, StreamMode, stream_keys

ONE_AT_A_TIME = 100
GROWTH_NUM, GROWTH_DEN = 11, 10  # x1.1 in exact integer arithmetic


# --------------------------------------------------------------------------
# Moment accumulator
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class SampleStats:
    """Count, mean and centred second moment of values (and gradients)."""

    n: int = 0
    mean: float = 0.0
    m2: float = 0.0
    grad_mean: np.ndarray | None = None
    grad_m2_trace: float | None = None

    def variance(self) -> float:
        return self.m2 / self.n if self.n else 0.0

    def grad_variance(self) -> float:
        if self.grad_m2_trace is None:
            raise UsageError("no gradient samples recorded")
        return self.grad_m2_trace / self.n if self.n else 0.0

    def std(self) -> float:
        return math.sqrt(max(self.variance(), 0.0))

    def grad_std(self) -> float:
        return math.sqrt(max(self.grad_variance(), 0.0))

    def merge(self, values, grads=None) -> "SampleStats":
        """Fold a batch of samples in (Chan et al. pairwise combination)."""
        values = np.asarray(values, dtype=float).ravel()
        m = values.size
        if m == 0:
            return self
        has_grad = self.grad_m2_trace is not None
        if self.n and has_grad != (grads is not None):
            raise InputError("gradient presence must be consistent across updates")
        bmean = float(values.mean())
        bm2 = float(np.sum((values - bmean) ** 2))
        n = self.n + m
        d = bmean - self.mean
        mean = self.mean + d * m / n
        m2 = self.m2 + bm2 + d * d * self.n * m / n
        if grads is None:
            return SampleStats(n, mean, m2)
        grads = np.asarray(grads, dtype=float).reshape(m, -1)
        gmean_b = grads.mean(axis=0)
        gm2_b = float(np.sum((grads - gmean_b) ** 2))
        if self.n == 0:
            return SampleStats(n, mean, m2, gmean_b, gm2_b)
        gd = gmean_b - self.grad_mean
        gmean = self.grad_mean + gd * (m / n)
        gm2 = self.grad_m2_trace + gm2_b + float(gd @ gd) * self.n * m / n
        return SampleStats(n, mean, m2, gmean, gm2)


def update(stats: SampleStats, obs: Observation) -> SampleStats:
    """Welford single-sample update."""
    if obs.gradient is None:
        return stats.merge([obs.value])
    return stats.merge([obs.value], np.asarray(obs.gradient, dtype=float)[None, :])


# --------------------------------------------------------------------------
# Rules
# --------------------------------------------------------------------------


class Rule(enum.Enum):
    A0 = "A0"
    B0 = "B0"
    C0 = "C0"
    A1 = "A1"
    B1 = "B1"
    C1 = "C1"

    @property
    def order(self) -> int:
        return int(self.value[1])

    @property
    def beta(self) -> float:
        return _BETA[self]

    @property
    def default_mode(self) -> StreamMode:
        return StreamMode.INDEPENDENT if self.value[0] == "A" else StreamMode.CRN


_BETA = {Rule.A0: 2.0, Rule.B0: 1.5, Rule.C0: 1.0, Rule.A1: 2.0, Rule.B1: 1.0, Rule.C1: 0.0}


def parse_rule(name) -> Rule:
    if isinstance(name, Rule):
        return name
    key = str(name).upper().replace("-", "").replace("_", "")
    try:
        return Rule(key)
    except ValueError:
        raise ConfigError(f"unknown sampling rule {name!r}; expected one of A0 B0 C0 A1 B1 C1") from None


@dataclass(frozen=True)
class SamplingRule:
    """Stopping-rule parameters.

    ``kappa_as=None`` means "pick from a pilot run" (the engine resolves it
    before sampling starts).
    """

    rule: Rule = Rule.C1
    sigma0: float = 1.0
    kappa_as: float | None = None
    n_min: int = 2
    n_cap: int = 1_000_000

    def __post_init__(self):
        object.__setattr__(self, "rule", parse_rule(self.rule))
        if not self.sigma0 > 0:
            raise ConfigError("sigma0 must be > 0")
        if self.kappa_as is not None and not self.kappa_as > 0:
            raise ConfigError("kappa_as must be > 0")
        if int(self.n_min) < 2:
            raise ConfigError("n_min must be >= 2")
        if int(self.n_cap) < int(self.n_min):
            raise ConfigError("n_cap must be >= n_min")

    @property
    def order(self) -> int:
        return self.rule.order

    @property
    def beta(self) -> float:
        return self.rule.beta

    def with_kappa(self, kappa_as: float) -> "SamplingRule":
        return replace(self, kappa_as=float(kappa_as))


@dataclass(frozen=True)
class InflationSchedule:
    lambda0: float = 2.0
    eps_lambda: float = 0.5

    def __post_init__(self):
        if not self.lambda0 >= 2.0:
            raise ConfigError("lambda0 must be >= 2")
        if not 0.0 < self.eps_lambda < 1.0:
            raise ConfigError("eps_lambda must be in (0,1)")


def inflation(k: int, sched: InflationSchedule = InflationSchedule()) -> float:
    """``lambda0 * log(max(k, 2)) ** (1 + eps_lambda)``."""
    if k < 0:
        raise InputError("k must be >= 0")
    return sched.lambda0 * math.log(max(k, 2)) ** (1.0 + sched.eps_lambda)


def threshold(rule: SamplingRule, sigma_hat: float, delta: float, lambda_k: float) -> float:
    """Real-valued sample size at which the rule's inequality becomes tight."""
    if rule.kappa_as is None:
        raise UsageError("kappa_as has not been resolved")
    s = rule.sigma0 if rule.rule is Rule.C1 else max(rule.sigma0, sigma_hat)
    return s * s * lambda_k / (rule.kappa_as**2 * delta ** (2.0 * rule.beta))


def stop_condition(rule: SamplingRule, n: int, sigma_hat: float, delta: float, lambda_k: float) -> bool:
    """True iff ``(sigma0 v sigma_hat)/sqrt(n) <= kappa_as delta**beta / sqrt(lambda_k)``.

    Evaluated in squared form, ``n >= s**2 lambda / (kappa**2 delta**(2 beta))``,
    so that C1 agrees bit-for-bit with its closed form.
    """
    if n < 1 or not delta > 0 or not lambda_k > 0:
        raise InputError("need n >= 1, delta > 0, lambda_k > 0")
    return n >= threshold(rule, sigma_hat, delta, lambda_k)


def point_sigma(rule: Rule, stats: SampleStats) -> float:
    """The per-point standard deviation estimate a rule reacts to."""
    if rule is Rule.C1:
        return 0.0
    if rule.order == 0:
        return stats.std()
    if stats.grad_m2_trace is None:
        raise UsageError(f"rule {rule.value} needs gradient samples")
    if rule is Rule.B1:
        return stats.grad_std()
    return max(stats.std(), stats.grad_std())


def group_sigma(rule: Rule, stats: Sequence[SampleStats]) -> float:
    return max(point_sigma(rule, s) for s in stats)


# --------------------------------------------------------------------------
# Adaptive sampling
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class StreamContext:
    """Maps (point slot, sample index) to stream keys for one sampling call.

    In CRN mode the slot is ignored, so sample ``i`` of every point reads
    the stream ``prefix + [i]``; otherwise it reads ``prefix + [slot, i]``.
    """

    master_seed: int
    prefix: tuple
    mode: StreamMode = StreamMode.CRN

    def keys(self, slot: int, start: int, count: int) -> np.ndarray:
        if self.mode is StreamMode.CRN:
            return stream_keys(self.master_seed, self.prefix, start, count)
        return stream_keys(self.master_seed, self.prefix + (int(slot),), start, count)


@dataclass
class SamplingResult:
    stats: list
    work: int
    truncated: bool = False
    checks: list = field(default_factory=list)  # (n, sigma_hat, stopped) at each batch boundary

    @property
    def n(self) -> list:
        return [s.n for s in self.stats]


def next_size(n: int) -> int:
    if n < ONE_AT_A_TIME:
        return n + 1
    return max(n + 1, -(-n * GROWTH_NUM // GROWTH_DEN))


def sample_adaptively(
    points,
    rule: SamplingRule,
    delta: float,
    lambda_k: float,
    streams: StreamContext,
    oracle,
    stats: Sequence[SampleStats | None] | None = None,
    slots: Sequence[int] | None = None,
    call_limit: int | None = None,
) -> SamplingResult:
    """Sample ``points`` until the rule's stopping condition holds.

    Parameters
    ----------
    points : array_like, shape (p, d)
    stats : optional prior statistics per point, extended rather than
        restarted (sample ``i`` always reads stream ``i``, so prior samples
        must come from the same context).
    slots : stream slot per point (Independent mode), default ``0..p-1``.
    call_limit : absolute bound on ``oracle.calls``; a batch that would
        exceed it raises :class:`BudgetExhausted` before any call is made.

    Notes
    -----
    In CRN mode all points share one ``n`` and the rule sees the largest
    per-point sigma estimate.  The first size tried is the smallest ``n``
    the ``sigma0`` floor alone allows, which cannot change the outcome
    since the floor is a lower bound on every threshold.
    """
    X = np.atleast_2d(np.asarray(points, dtype=float))
    p = X.shape[0]
    if p < 1:
        raise InputError("need at least one point")
    if streams.mode is StreamMode.INDEPENDENT and p != 1:
        raise UsageError("Independent mode samples one point per call")
    if rule.order > 0 and not oracle.first_order:
        raise UsageError(f"rule {rule.rule.value} needs a first-order oracle")
    grads_wanted = rule.order > 0
    slots = list(range(p)) if slots is None else list(slots)
    cur = [s if s is not None else SampleStats() for s in (stats or [None] * p)]
    if len(cur) != p or len(slots) != p:
        raise InputError("stats and slots must match points")

    calls0 = oracle.calls
    floor_n = math.ceil(min(threshold(rule, 0.0, delta, lambda_k), float(rule.n_cap)))
    target = min(max(rule.n_min, floor_n, max(s.n for s in cur)), rule.n_cap)
    checks = []

    def extend(to):
        need = sum(max(0, to - s.n) for s in cur)
        if call_limit is not None and oracle.calls + need > call_limit:
            raise BudgetExhausted(f"sampling to n={to} needs {need} calls")
        if streams.mode is StreamMode.CRN:
            # points with equal n move together; laggards read the same streams
            for start in sorted({s.n for s in cur}):
                idx = [i for i, s in enumerate(cur) if s.n == start]
                if start >= to:
                    continue
                keys = streams.keys(0, start, to - start)
                v, g = oracle.sample(X[idx], keys, gradients=grads_wanted)
                for j, i in enumerate(idx):
                    cur[i] = cur[i].merge(v[:, j], None if g is None else g[:, j, :])
        else:
            for i, s in enumerate(cur):
                if s.n >= to:
                    continue
                keys = streams.keys(slots[i], s.n, to - s.n)
                v, g = oracle.sample(X[i : i + 1], keys, gradients=grads_wanted)
                cur[i] = s.merge(v[:, 0], None if g is None else g[:, 0, :])

    extend(target)
    truncated = False
    while True:
        n = cur[0].n
        sig = group_sigma(rule.rule, cur)
        stop = stop_condition(rule, n, sig, delta, lambda_k)
        checks.append((n, sig, stop))
        if stop:
            break
        if n >= rule.n_cap:
            truncated = True
            break
        extend(min(next_size(n), rule.n_cap))
    return SamplingResult(cur, oracle.calls - calls0, truncated, checks)
