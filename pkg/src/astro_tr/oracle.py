"""Stochastic oracles, reproducible random streams and the test-problem library.

A random element ``xi`` is a :class:`RandomStream`: an infinite, replayable
sequence of draws addressed by ``(master_seed, path)``.  Problems consume a
fixed layout of counters from the stream, so evaluating several points with
the same stream yields common random numbers.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Mapping, Sequence

import numpy as np

from . import kernels
from .errors import ConfigError, InputError


# --------------------------------------------------------------------------
# Streams
# --------------------------------------------------------------------------


@lru_cache(maxsize=65536)
def _path_key(master_seed: int, path: tuple) -> int:
    key = kernels.root_key(int(master_seed))
    for p in path:
        if p < 0:
            raise InputError(f"stream path components must be non-negative, got {p}")
        key = int(kernels.derive_keys(key, np.array([p], dtype=np.uint64))[0])
    return key


@dataclass(frozen=True)
class RandomStream:
    """Counter-based random stream keyed by ``(master_seed, path)``."""

    master_seed: int
    path: tuple

    @property
    def key(self) -> int:
        return _path_key(self.master_seed, self.path)

    def raw(self, count: int, start: int = 0) -> np.ndarray:
        return kernels.raw_words(np.array([self.key], dtype=np.uint64), start, count)[0]

    def uniforms(self, count: int, start: int = 0) -> np.ndarray:
        return kernels.uniforms(np.array([self.key], dtype=np.uint64), start, count)[0]

    def normals(self, count: int, start: int = 0) -> np.ndarray:
        return kernels.normals(np.array([self.key], dtype=np.uint64), start, count)[0]


def derive_stream(master_seed: int, path: Sequence[int]) -> RandomStream:
    """Return the stream at ``path`` under ``master_seed``.

    Streams are pure functions of their arguments: equal inputs give equal
    draw sequences, different paths give statistically independent ones.
    """
    path = tuple(int(p) for p in path)
    if not path:
        raise InputError("stream path must be non-empty")
    if any(p < 0 for p in path):
        raise InputError("stream path components must be non-negative")
    return RandomStream(int(master_seed), path)


def stream_keys(master_seed: int, prefix: Sequence[int], start: int, count: int) -> np.ndarray:
    """Keys of the streams ``prefix + [i]`` for ``i`` in ``[start, start+count)``."""
    parent = _path_key(int(master_seed), tuple(int(p) for p in prefix))
    return kernels.derive_keys(parent, np.arange(start, start + count, dtype=np.uint64))


class StreamMode(enum.Enum):
    CRN = "crn"
    INDEPENDENT = "independent"


@dataclass(frozen=True)
class StreamPolicy:
    """How random streams are shared between points and iterations.

    Under ``CRN`` every point evaluated in one iteration uses the same ordered
    sequence of streams (sample ``i`` of any point sees stream ``i``).  Under
    ``INDEPENDENT`` each (point, sample) pair has its own stream.  With
    ``aggressive_reuse`` the iteration index is dropped from stream paths so
    the same random numbers are reused across iterations.
    """

    mode: StreamMode = StreamMode.CRN
    aggressive_reuse: bool = False


# --------------------------------------------------------------------------
# Problem description
# --------------------------------------------------------------------------


class Regularity(enum.Enum):
    INDEPENDENT_NOISE = "IndependentNoise"
    HOELDER_PATHS = "HoelderPaths"
    LIPSCHITZ_PATHS = "LipschitzPaths"
    SMOOTH_PATHS = "SmoothPaths"


@dataclass(frozen=True)
class ProblemSpec:
    name: str
    dimension: int = 2
    noise_scale: float = 1.0
    regularity: Regularity | None = None
    parameters: Mapping[str, float] = field(default_factory=dict)
    x0: tuple | None = None

    def __post_init__(self):
        if int(self.dimension) < 1:
            raise ConfigError("dimension must be >= 1")
        if not (self.noise_scale >= 0.0 and math.isfinite(self.noise_scale)):
            raise ConfigError("noise_scale must be a finite non-negative number")
        if self.x0 is not None and len(self.x0) != self.dimension:
            raise ConfigError(f"x0 has length {len(self.x0)}, expected dimension {self.dimension}")


@dataclass(frozen=True)
class Observation:
    value: float
    gradient: np.ndarray | None = None


# --------------------------------------------------------------------------
# Oracles
# --------------------------------------------------------------------------


class StochasticOracle:
    """Base class for the synthetic problems.

    Subclasses implement ``_draw`` (stream keys -> random element arrays),
    ``_values`` and optionally ``_grads``, plus the noiseless ``f``/``grad``
    and the exact variance function used by the diagnostics.
    """

    name = "base"
    regularity = Regularity.INDEPENDENT_NOISE
    first_order = False
    defaults: dict = {}

    def __init__(self, spec: ProblemSpec):
        unknown = set(spec.parameters) - set(self.defaults)
        if unknown:
            raise ConfigError(f"unknown parameter(s) for {self.name}: {', '.join(sorted(unknown))}")
        if spec.regularity is not None and spec.regularity != self.regularity:
            raise ConfigError(
                f"{self.name} realizes {self.regularity.value}, not {spec.regularity.value}"
            )
        self.spec = spec
        self.dimension = int(spec.dimension)
        self.sigma = float(spec.noise_scale)
        self.params = {**self.defaults, **{k: float(v) for k, v in spec.parameters.items()}}
        self.x0 = np.asarray(spec.x0 if spec.x0 is not None else self.default_x0(), dtype=float)
        self.calls = 0
        self._validate()

    # hooks ---------------------------------------------------------------
    def _validate(self):
        pass

    def default_x0(self):
        return np.ones(self.dimension)

    def _draw(self, keys):
        raise NotImplementedError

    def _values(self, X, xi):
        raise NotImplementedError

    def _grads(self, X, xi):
        raise NotImplementedError

    def f(self, x):
        raise NotImplementedError

    def grad(self, x):
        raise NotImplementedError

    def variance(self, x):
        """Exact ``Var F(x, xi)``."""
        raise NotImplementedError

    def crn_bound(self, x, s):
        """Upper bound on ``Var(F(x+s,xi) - F(x,xi))`` under common streams.

        Returns ``None`` when the generator's regularity class offers none.
        """
        return None

    # public --------------------------------------------------------------
    def check_point(self, x):
        x = np.asarray(x, dtype=float)
        if x.shape[-1] != self.dimension:
            raise InputError(f"point has dimension {x.shape[-1]}, problem has {self.dimension}")
        if not np.all(np.isfinite(x)):
            raise InputError("point must be finite")
        return x

    def sample(self, X, keys, gradients: bool | None = None):
        """Evaluate points ``X`` (shape ``(p, d)``) under every stream key.

        Returns ``(values, grads)`` with shapes ``(n, p)`` and ``(n, p, d)``;
        ``grads`` is ``None`` for zeroth-order oracles or when
        ``gradients=False``.  Every (point, key) pair counts as one call.
        """
        X = self.check_point(np.atleast_2d(X))
        keys = np.asarray(keys, dtype=np.uint64)
        xi = self._draw(keys)
        values = self._values(X, xi)
        want = self.first_order if gradients is None else (gradients and self.first_order)
        grads = self._grads(X, xi) if want else None
        self.calls += keys.shape[0] * X.shape[0]
        return values, grads

    def evaluate(self, x, stream: RandomStream) -> Observation:
        x = self.check_point(x)
        if x.ndim != 1:
            raise InputError("evaluate takes a single point")
        values, grads = self.sample(x[None, :], np.array([stream.key], dtype=np.uint64))
        return Observation(float(values[0, 0]), None if grads is None else grads[0, 0].copy())

    def metadata(self) -> dict:
        return {"name": self.name, "regularity": self.regularity.value, **self.params}


class _SmoothNoise(StochasticOracle):
    """``F(x, xi) = f(x) + sigma * (slope * a(xi)^T x + b(xi))`` with Gaussian ``a``, ``b``."""

    regularity = Regularity.SMOOTH_PATHS
    first_order = True
    defaults = {"slope_scale": 0.0}

    def _validate(self):
        if self.params["slope_scale"] < 0:
            raise ConfigError("slope_scale must be >= 0")

    def _draw(self, keys):
        z = kernels.normals(keys, 0, self.dimension + 1)
        return z[:, 0], z[:, 1:] * self.params["slope_scale"]

    def _f_rows(self, X):
        return np.array([self.f(x) for x in X])

    def _g_rows(self, X):
        return np.array([self.grad(x) for x in X])

    def _values(self, X, xi):
        b, a = xi
        return self._f_rows(X)[None, :] + self.sigma * (a @ X.T + b[:, None])

    def _grads(self, X, xi):
        _, a = xi
        return self._g_rows(X)[None, :, :] + self.sigma * a[:, None, :]

    def variance(self, x):
        x = np.asarray(x, dtype=float)
        return self.sigma**2 * (1.0 + self.params["slope_scale"] ** 2 * float(x @ x))

    def kappa_fl_sq_mean(self):
        # |e(x1) - e(x2)| <= sigma * |a| * |x1 - x2|
        return self.sigma**2 * self.params["slope_scale"] ** 2 * self.dimension

    def crn_bound(self, x, s):
        return self.kappa_fl_sq_mean() * float(np.dot(s, s))


class QuadSmooth(_SmoothNoise):
    """``f(x) = 0.5 |x|^2`` with smooth (affine-in-x) noise."""

    name = "quad-smooth"

    def f(self, x):
        x = np.asarray(x, dtype=float)
        return 0.5 * float(x @ x)

    def grad(self, x):
        return np.array(x, dtype=float)

    def _f_rows(self, X):
        return 0.5 * np.einsum("ij,ij->i", X, X)

    def _g_rows(self, X):
        return X


class RosenbrockSmooth(_SmoothNoise):
    """Chained Rosenbrock function with smooth (affine-in-x) noise."""

    name = "rosenbrock-smooth"

    def _validate(self):
        super()._validate()
        if self.dimension < 2:
            raise ConfigError("rosenbrock-smooth needs dimension >= 2")

    def default_x0(self):
        x0 = np.ones(self.dimension)
        x0[0::2] = -1.2
        return x0

    def f(self, x):
        x = np.asarray(x, dtype=float)
        return float(np.sum(100.0 * (x[1:] - x[:-1] ** 2) ** 2 + (1.0 - x[:-1]) ** 2))

    def grad(self, x):
        x = np.asarray(x, dtype=float)
        g = np.zeros_like(x)
        r = x[1:] - x[:-1] ** 2
        g[:-1] += -400.0 * x[:-1] * r - 2.0 * (1.0 - x[:-1])
        g[1:] += 200.0 * r
        return g


class QuadLipschitz(StochasticOracle):
    """``f(x) = 0.5 |x|^2`` plus a random kink field.

    ``e(x, xi) = sigma * sum_i c_i |x_i - m_i|`` with slopes ``c_i ~ U[-c, c]``
    independent of kink locations ``m_i ~ U[-r, r]``, so ``E e = 0`` and each
    path is Lipschitz with constant ``sigma * |c|_2``.
    """

    name = "quad-lipschitz"
    regularity = Regularity.LIPSCHITZ_PATHS
    first_order = True
    defaults = {"slope_bound": 1.0, "kink_spread": 2.0}

    def _validate(self):
        if self.params["slope_bound"] <= 0 or self.params["kink_spread"] <= 0:
            raise ConfigError("slope_bound and kink_spread must be > 0")

    def _draw(self, keys):
        d = self.dimension
        u = kernels.uniforms(keys, 0, 2 * d)
        c = self.params["slope_bound"] * (2.0 * u[:, :d] - 1.0)
        m = self.params["kink_spread"] * (2.0 * u[:, d:] - 1.0)
        return c, m

    def _values(self, X, xi):
        c, m = xi
        kink = np.abs(X[None, :, :] - m[:, None, :])
        base = 0.5 * np.einsum("ij,ij->i", X, X)
        return base[None, :] + self.sigma * np.einsum("nd,npd->np", c, kink)

    def _grads(self, X, xi):
        c, m = xi
        sgn = np.sign(X[None, :, :] - m[:, None, :])
        return X[None, :, :] + self.sigma * c[:, None, :] * sgn

    def f(self, x):
        x = np.asarray(x, dtype=float)
        return 0.5 * float(x @ x)

    def grad(self, x):
        return np.array(x, dtype=float)

    def variance(self, x):
        x = np.asarray(x, dtype=float)
        c, r = self.params["slope_bound"], self.params["kink_spread"]
        return self.sigma**2 * (c * c / 3.0) * float(np.sum(x * x + r * r / 3.0))

    def noise_lipschitz(self, stream: RandomStream) -> float:
        """Path Lipschitz constant of the noise for one stream."""
        c, _ = self._draw(np.array([stream.key], dtype=np.uint64))
        return self.sigma * float(np.linalg.norm(c[0]))

    def lipschitz_constant(self, stream: RandomStream, radius: float) -> float:
        """Lipschitz constant of ``F(., xi)`` over the ball of the given radius."""
        return radius + self.noise_lipschitz(stream)

    def kappa_fl_sq_mean(self):
        return self.sigma**2 * self.dimension * self.params["slope_bound"] ** 2 / 3.0

    def crn_bound(self, x, s):
        return self.kappa_fl_sq_mean() * float(np.dot(s, s))


class BMField(StochasticOracle):
    """``f(x) = 0.5 |x|^2`` plus Brownian noise ``sigma * B_xi(w^T x + t0)``.

    ``B`` is a two-sided Brownian motion with ``B(0) = 0`` realized lazily by
    bridge refinement, ``w = 1/sqrt(d)``.  Paths are Hoelder-1/2, not
    Lipschitz; ``Var F(x) = sigma^2 |t(x)|``.
    """

    name = "bm-field"
    regularity = Regularity.HOELDER_PATHS
    first_order = False
    defaults = {"t0": 1.0, "segment_length": 16.0, "depth": 30.0}

    def _validate(self):
        if self.params["segment_length"] <= 0:
            raise ConfigError("segment_length must be > 0")
        depth = self.params["depth"]
        if depth != int(depth) or not 1 <= depth <= 60:
            raise ConfigError("depth must be an integer in [1, 60]")
        self.w = np.full(self.dimension, 1.0 / math.sqrt(self.dimension))

    def times(self, X):
        # row-wise reduction: a BLAS product may round differently with the
        # row order, and the path is steep at the finest refinement level
        return (np.atleast_2d(X) * self.w).sum(axis=1) + self.params["t0"]

    def _draw(self, keys):
        return keys

    def _values(self, X, keys):
        b = kernels.brownian(
            keys, self.times(X), self.params["segment_length"], int(self.params["depth"])
        )
        base = 0.5 * np.einsum("ij,ij->i", X, X)
        return base[None, :] + self.sigma * b

    def f(self, x):
        x = np.asarray(x, dtype=float)
        return 0.5 * float(x @ x)

    def grad(self, x):
        return np.array(x, dtype=float)

    def variance(self, x):
        return self.sigma**2 * abs(float(self.times(x)[0]))

    def holder_constants(self, x):
        """``(L_rho, L_sigma, alpha)`` valid at ``x``."""
        t = abs(float(self.times(x)[0]))
        l_rho = float(np.linalg.norm(self.w)) / t if t > 0 else math.inf
        return l_rho, self.sigma**2 * float(np.linalg.norm(self.w)), 1.0

    def crn_bound(self, x, s):
        l_rho, l_sigma, alpha = self.holder_constants(x)
        ns = float(np.linalg.norm(s))
        return 2.0 * self.variance(x) * l_rho * ns**alpha + 3.0 * l_sigma * ns


class BusSchedule(StochasticOracle):
    """Single controllable bus departure on ``[0, T]`` with Poisson arrivals.

    Passengers arriving before the departure ``x`` wait ``x - a``; those
    arriving after it wait for a fixed final bus at ``T`` (``T - a``) plus
    ``penalty``.  The cost is the total wait divided by the expected number of
    arrivals ``rate * T``.  ``noise_scale`` in ``[0, 1]`` shrinks the sample
    toward its mean.  Paths jump at arrival epochs, so no regularity is
    claimed.
    """

    name = "bus-schedule"
    regularity = Regularity.INDEPENDENT_NOISE
    first_order = False
    defaults = {"horizon": 30.0, "rate": 1.0, "penalty": 0.0}

    def _validate(self):
        if self.dimension != 1:
            raise ConfigError("bus-schedule has dimension 1")
        p = self.params
        if p["horizon"] <= 0 or p["rate"] <= 0 or p["penalty"] < 0:
            raise ConfigError("horizon and rate must be > 0, penalty >= 0")
        if self.sigma > 1.0:
            raise ConfigError("bus-schedule noise_scale must be in [0, 1]")
        mean = p["rate"] * p["horizon"]
        # Poisson cdf table up to a 1e-15 tail
        k = np.arange(0, int(mean + 40.0 * math.sqrt(mean) + 50))
        logpmf = k * math.log(mean) - mean - np.array([math.lgamma(i + 1.0) for i in k])
        cdf = np.cumsum(np.exp(logpmf))
        self._kmax = int(np.searchsorted(cdf, 1.0 - 1e-15)) + 1
        self._cdf = cdf[: self._kmax]

    def default_x0(self):
        return np.array([5.0])

    def _draw(self, keys):
        u = kernels.uniforms(keys, 0, self._kmax + 1)
        count = np.minimum(np.searchsorted(self._cdf, u[:, 0], side="right"), self._kmax)
        arrivals = self.params["horizon"] * u[:, 1:]
        present = np.arange(self._kmax)[None, :] < count[:, None]
        return arrivals, present

    def _values(self, X, xi):
        arrivals, present = xi
        T, pen = self.params["horizon"], self.params["penalty"]
        x = X[:, 0]
        a = arrivals[:, :, None]
        before = a <= x[None, None, :]
        wait = np.where(before, x[None, None, :] - a, pen + T - a)
        wait = np.where(present[:, :, None], wait, 0.0)
        raw = wait.sum(axis=1) / (self.params["rate"] * T)
        if self.sigma == 1.0:
            return raw
        fx = np.array([self.f(xx) for xx in X])
        return fx[None, :] + self.sigma * (raw - fx[None, :])

    def f(self, x):
        T, pen = self.params["horizon"], self.params["penalty"]
        x = float(np.asarray(x, dtype=float).reshape(-1)[0])
        m = min(max(x, 0.0), T)
        return ((x * m - 0.5 * m * m) + pen * (T - m) + 0.5 * (T - m) ** 2) / T

    def grad(self, x):
        T, pen = self.params["horizon"], self.params["penalty"]
        x = float(np.asarray(x, dtype=float).reshape(-1)[0])
        m = min(max(x, 0.0), T)
        inside = 1.0 if 0.0 < x < T else 0.0
        return np.array([(m - (pen + T - m) * inside) / T])

    def variance(self, x):
        T, pen, rate = self.params["horizon"], self.params["penalty"], self.params["rate"]
        x = float(np.asarray(x, dtype=float).reshape(-1)[0])
        m = min(max(x, 0.0), T)
        before = (x**3 - (x - m) ** 3) / 3.0
        after = ((pen + T - m) ** 3 - pen**3) / 3.0
        return self.sigma**2 * rate * (before + after) / (rate * T) ** 2


PROBLEMS = {
    cls.name: cls for cls in (QuadSmooth, QuadLipschitz, BMField, BusSchedule, RosenbrockSmooth)
}


def make_problem(spec: ProblemSpec) -> StochasticOracle:
    """Instantiate the library problem named by ``spec.name``."""
    try:
        cls = PROBLEMS[spec.name]
    except KeyError:
        raise ConfigError(
            f"unknown problem {spec.name!r}; expected one of {', '.join(sorted(PROBLEMS))}"
        ) from None
    return cls(spec)


def evaluate(problem, x, stream: RandomStream) -> Observation:
    """One realization ``F(x, xi)`` (and ``G(x, xi)`` for first-order problems)."""
    oracle = make_problem(problem) if isinstance(problem, ProblemSpec) else problem
    return oracle.evaluate(x, stream)
