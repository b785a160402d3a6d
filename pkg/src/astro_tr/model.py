"""Local quadratic models: interpolation designs, poisedness and BFGS."""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.special import ndtri
from scipy.stats import qmc

from .errors import InputError, PoisednessError

N_BALL = 1000
SINGULAR_RCOND = 1e-12


@dataclass(frozen=True)
class DesignSet:
    """Interpolation set ``{center} + points`` inside ``B(center, delta)``."""

    center: np.ndarray
    points: np.ndarray
    delta: float
    kind: str = "general"

    def __post_init__(self):
        c = np.asarray(self.center, dtype=float).ravel()
        P = np.asarray(self.points, dtype=float).reshape(-1, c.size)
        object.__setattr__(self, "center", c)
        object.__setattr__(self, "points", P)
        if not self.delta > 0:
            raise InputError("delta must be > 0")
        r = np.linalg.norm(P - c, axis=1)
        if np.any(r > self.delta * (1 + 1e-12)):
            raise InputError("design point outside the trust region")

    @property
    def dimension(self) -> int:
        return self.center.size

    def all_points(self) -> np.ndarray:
        return np.vstack([self.center[None, :], self.points])


@dataclass(frozen=True)
class LocalModel:
    """``M(center + s) = c + g.s + s.H.s / 2``."""

    c: float
    g: np.ndarray
    H: np.ndarray

    def value(self, s) -> float:
        s = np.asarray(s, dtype=float)
        return float(self.c + self.g @ s + 0.5 * s @ self.H @ s)

    def decrease(self, s) -> float:
        s = np.asarray(s, dtype=float)
        return float(-(self.g @ s) - 0.5 * s @ self.H @ s)


@dataclass(frozen=True)
class PoisednessReport:
    lam: float
    conditioning: float


def coordinate_design(center, delta: float) -> DesignSet:
    """``center`` and ``center +/- delta e_i``, ordered +e1, -e1, +e2, ..."""
    c = np.asarray(center, dtype=float).ravel()
    d = c.size
    steps = np.zeros((2 * d, d))
    steps[0::2][np.arange(d), np.arange(d)] = delta
    steps[1::2][np.arange(d), np.arange(d)] = -delta
    return DesignSet(c, c + steps, float(delta), "coordinate")


def quadratic_design(center, delta: float) -> DesignSet:
    """Coordinate design plus ``delta (e_i + e_j)/sqrt(2)`` for ``i < j``.

    Gives ``(d+1)(d+2)/2`` points, enough for a full quadratic.
    """
    base = coordinate_design(center, delta)
    d = base.dimension
    extra = []
    for i in range(d):
        for j in range(i + 1, d):
            e = np.zeros(d)
            e[i] = e[j] = delta / math.sqrt(2.0)
            extra.append(base.center + e)
    pts = np.vstack([base.points] + ([np.array(extra)] if extra else []))
    return DesignSet(base.center, pts, float(delta), "quadratic")


# --------------------------------------------------------------------------
# monomial bases in scaled coordinates u = (x - center)/delta
# --------------------------------------------------------------------------


def _basis_kind(m: int, d: int) -> str:
    if m == d + 1:
        return "linear"
    if m == 2 * d + 1:
        return "diagonal"
    if m == (d + 1) * (d + 2) // 2:
        return "full"
    raise PoisednessError(f"{m} points fit no supported basis in dimension {d}")


def _basis(U: np.ndarray, kind: str) -> np.ndarray:
    U = np.atleast_2d(U)
    cols = [np.ones(U.shape[0]), *U.T]
    if kind in ("diagonal", "full"):
        cols += list(0.5 * U.T**2)
    if kind == "full":
        d = U.shape[1]
        cols += [U[:, i] * U[:, j] for i in range(d) for j in range(i + 1, d)]
    return np.column_stack(cols)


def _system(design: DesignSet):
    Y = design.all_points()
    U = (Y - design.center) / design.delta
    kind = _basis_kind(Y.shape[0], design.dimension)
    M = _basis(U, kind)
    sv = np.linalg.svd(M, compute_uv=False)
    if sv[-1] <= SINGULAR_RCOND * sv[0]:
        raise PoisednessError("interpolation matrix is singular; rebuild the design")
    return M, kind, float(sv[0] / sv[-1])


def interpolate(design: DesignSet, values, kappa_H: float = 1e3) -> LocalModel:
    """Quadratic model through the design values (center first).

    The coordinate design uses closed-form central differences; other sets
    solve the monomial system.  Hessian entries are clipped to ``+/-kappa_H``.
    """
    v = np.asarray(values, dtype=float).ravel()
    d, D = design.dimension, design.delta
    if v.size != design.points.shape[0] + 1:
        raise InputError("need one value per design point")
    if design.kind == "coordinate":
        c = v[0]
        fp, fm = v[1::2], v[2::2]
        g = (fp - fm) / (2.0 * D)
        H = np.diag(np.clip((fp + fm - 2.0 * c) / D**2, -kappa_H, kappa_H))
        return LocalModel(float(c), g, H)

    M, kind, _ = _system(design)
    a = np.linalg.solve(M, v)
    c = a[0]
    g = a[1 : d + 1] / D
    H = np.zeros((d, d))
    if kind != "linear":
        H[np.diag_indices(d)] = a[d + 1 : 2 * d + 1] / D**2
    if kind == "full":
        iu = np.triu_indices(d, 1)
        H[iu] = a[2 * d + 1 :] / D**2
        H[(iu[1], iu[0])] = H[iu]
    return LocalModel(float(c), g, np.clip(H, -kappa_H, kappa_H))


@lru_cache(maxsize=64)
def _ball_sample(d: int, n: int = N_BALL) -> np.ndarray:
    """Low-discrepancy points in the closed unit ball (plus boundary axes)."""
    u = qmc.Sobol(d + 1, scramble=True, seed=12345).random_base2(math.ceil(math.log2(n)))[:n]
    z = ndtri(np.clip(u[:, :d], 1e-12, 1 - 1e-12))
    z /= np.linalg.norm(z, axis=1, keepdims=True)
    r = u[:, d] ** (1.0 / d)
    axes = np.vstack([np.eye(d), -np.eye(d)])
    return np.vstack([z * r[:, None], axes])


def poisedness(design: DesignSet) -> PoisednessReport:
    """Lambda = max over the ball of the largest |Lagrange polynomial|.

    Exactly 1 for the coordinate design.  Other designs are scanned on a
    1000-point Sobol sample of the ball plus the design points themselves.
    """
    M, kind, cond = _system(design)
    if design.kind == "coordinate":
        return PoisednessReport(1.0, cond)
    U = np.vstack([_ball_sample(design.dimension), (design.all_points() - design.center) / design.delta])
    L = _basis(U, kind) @ np.linalg.inv(M)
    return PoisednessReport(float(np.max(np.abs(L))), cond)


def bfgs_update(B, s, y, kappa_H: float = 1e3) -> np.ndarray:
    """BFGS update ``B - Bss'B/(s'Bs) + yy'/(y's)`` with safeguards.

    The update is skipped (``B`` returned) when the curvature ``y's`` is not
    positive enough or when the result would have spectral norm above
    ``kappa_H``.  The first correction is dropped when ``s'Bs`` vanishes,
    which happens from the zero starting matrix.
    """
    B = np.asarray(B, dtype=float)
    s = np.asarray(s, dtype=float)
    y = np.asarray(y, dtype=float)
    ys = float(y @ s)
    ny, ns = np.linalg.norm(y), np.linalg.norm(s)
    if ys <= 1e-10 * ny * ns or ns == 0.0:
        return B
    Bs = B @ s
    sBs = float(s @ Bs)
    new = B + np.outer(y, y) / ys
    if sBs > 1e-12 * ns * np.linalg.norm(Bs):
        new = new - np.outer(Bs, Bs) / sBs
    new = 0.5 * (new + new.T)
    if np.max(np.abs(np.linalg.eigvalsh(new))) > kappa_H:
        return B
    return new


def model_gradient_error(model: LocalModel, true_grad, delta: float) -> float:
    """Fully-linear ratio ``|g - grad f| / delta``."""
    return float(np.linalg.norm(model.g - np.asarray(true_grad, dtype=float)) / delta)
