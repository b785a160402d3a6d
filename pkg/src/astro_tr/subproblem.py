"""Trust-region subproblem: Cauchy point, dogleg and a curvature search."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InputError
from .model import LocalModel

# mixtures of the steepest-descent and negative-curvature directions tried
# when H is not positive definite
N_MIX = 16


@dataclass(frozen=True)
class StepResult:
    step: np.ndarray
    model_decrease: float
    cauchy_decrease: float
    kind: str = "cauchy"


def _decrease(g, H, s):
    return float(-(g @ s) - 0.5 * s @ H @ s)


def cauchy_step(g, H, delta: float) -> np.ndarray:
    """Minimizer of the model along ``-g`` inside the ball of radius ``delta``."""
    if not delta > 0:
        raise InputError("delta must be > 0")
    g = np.asarray(g, dtype=float)
    gn = float(np.linalg.norm(g))
    if gn == 0.0:
        return np.zeros_like(g)
    gHg = float(g @ np.asarray(H, dtype=float) @ g)
    # compare before dividing: delta * gHg can underflow to zero
    tau = 1.0 if gHg <= 0 or gn**3 >= delta * gHg else gn**3 / (delta * gHg)
    return -tau * delta * g / gn


def _boundary_tau(p, q, delta):
    """Largest t in [0,1] with |p + t (q - p)| = delta, assuming |p| <= delta < |q|."""
    d = q - p
    a = float(d @ d)
    b = 2.0 * float(p @ d)
    c = float(p @ p) - delta * delta
    disc = max(b * b - 4.0 * a * c, 0.0)
    return (-b + np.sqrt(disc)) / (2.0 * a)


def _dogleg(g, H, L, delta):
    pn = -np.linalg.solve(L.T, np.linalg.solve(L, g))
    if np.linalg.norm(pn) <= delta:
        return pn
    gHg = float(g @ H @ g)
    pu = -(float(g @ g) / gHg) * g
    nu = np.linalg.norm(pu)
    if nu >= delta:
        return delta * pu / nu
    return pu + _boundary_tau(pu, pn, delta) * (pn - pu)


def _line_min(g, H, u, delta):
    """Best ``t*u`` with ``0 <= t <= delta`` for a unit direction ``u``."""
    gu = float(g @ u)
    uHu = float(u @ H @ u)
    ts = [delta]
    if uHu > 0:
        ts.append(min(delta, max(0.0, -gu / uHu)))
    best = max(ts, key=lambda t: -(gu * t) - 0.5 * uHu * t * t)
    return best * u


def _curvature_search(g, H, delta):
    w, V = np.linalg.eigh(H)
    v = V[:, 0]
    gn = np.linalg.norm(g)
    if gn > 0:
        dg = -g / gn
        if g @ v > 0:
            v = -v
    else:
        dg = v
    dirs = [dg, v]
    for th in np.linspace(0.0, np.pi / 2, N_MIX + 2)[1:-1]:
        u = np.cos(th) * dg + np.sin(th) * v
        nu = np.linalg.norm(u)
        if nu > 0:
            dirs.append(u / nu)
    steps = [_line_min(g, H, u, delta) for u in dirs]
    return max(steps, key=lambda s: _decrease(g, H, s))


def solve(model: LocalModel, delta: float, kappa_fcd: float = 1.0) -> StepResult:
    """Approximate minimizer of the model over ``|s| <= delta``.

    Dogleg when ``H`` is positive definite, otherwise a line search over a
    fixed fan of directions between ``-g`` and the most negative curvature
    direction.  The Cauchy step is always a candidate, so the returned
    decrease is at least the Cauchy decrease.
    """
    if not delta > 0:
        raise InputError("delta must be > 0")
    if not 0 < kappa_fcd <= 1:
        raise InputError("kappa_fcd must be in (0,1]")
    g = np.asarray(model.g, dtype=float)
    H = np.asarray(model.H, dtype=float)
    sc = cauchy_step(g, H, delta)
    dc = _decrease(g, H, sc)
    best, kind = sc, "cauchy"
    try:
        L = np.linalg.cholesky(H)
    except np.linalg.LinAlgError:
        L = None
    if L is not None:
        if np.linalg.norm(g) > 0:
            cand, ckind = _dogleg(g, H, L, delta), "dogleg"
        else:
            cand, ckind = sc, "cauchy"
    else:
        cand, ckind = _curvature_search(g, H, delta), "curvature"
    n = np.linalg.norm(cand)
    if n > delta:
        cand = cand * (delta / n)
    if _decrease(g, H, cand) > dc:
        best, kind = cand, ckind
    return StepResult(best, _decrease(g, H, best), dc, kind)
