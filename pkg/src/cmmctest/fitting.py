"""Parametric fits of null models to single observed patterns.

Each fitter returns a :class:`FitResult` holding the fitted parameters plus
diagnostics. :func:`build_mixture_null` fits every pattern of a small
observed null sample and mixes the fits with equal weights.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.integrate import trapezoid
from scipy.optimize import minimize, minimize_scalar
from scipy.spatial import cKDTree

from .generators import LgcpParams, Mixture, PoissonParams, StraussParams, format_model, lattice_centres
from .patterns import PointPattern
from .summaries import DistanceGrid, k_function

DUMMY_LATTICE = 32
CONTRAST_EXPONENT = 0.25
K_MODEL_NODES = 256
LOG_GAMMA_MIN = -30.0


class FitError(RuntimeError):
    """An optimiser failed; ``diagnostics`` holds what it reported."""

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


@dataclass(frozen=True)
class FitResult:
    params: object
    objective: float = math.nan
    degenerate: bool = False
    candidates: tuple = field(default_factory=tuple)


def fit_poisson(p: PointPattern) -> FitResult:
    """Maximum likelihood ``N / area``; an empty pattern gives 0 and is flagged."""
    lam = len(p) / p.window.area()
    return FitResult(PoissonParams(lam), degenerate=len(p) == 0)


def _quadrature(p: PointPattern, lattice: int):
    """Berman-Turner scheme: data plus a dummy lattice, counting weights per cell."""
    w = p.window
    data = p.points
    dummy = lattice_centres(w, lattice)
    quad = np.vstack([data, dummy])
    cx = np.clip(((quad[:, 0] - w.x_min) / w.width * lattice).astype(int), 0, lattice - 1)
    cy = np.clip(((quad[:, 1] - w.y_min) / w.height * lattice).astype(int), 0, lattice - 1)
    cell = cy * lattice + cx
    per_cell = np.bincount(cell, minlength=lattice * lattice)
    weights = (w.area() / lattice**2) / per_cell[cell]
    return quad, weights


def _strauss_counts(p: PointPattern, quad: np.ndarray, radius: float) -> np.ndarray:
    """Number of data points within ``radius`` of each quadrature point, self excluded."""
    tree = cKDTree(p.points)
    t = tree.query_ball_point(quad, radius, return_length=True).astype(np.int64)
    t[: len(p)] -= 1
    return t


def _profile_loglik(theta: float, t_data_sum: int, t_quad: np.ndarray, w: np.ndarray, N: int) -> float:
    """Log pseudolikelihood at ``gamma = exp(theta)`` with beta profiled out."""
    z = np.sum(w * np.exp(theta * t_quad))
    return N * math.log(N / z) + theta * t_data_sum - N


def _fit_strauss_at(p: PointPattern, radius: float, lattice: int):
    N = len(p)
    quad, w = _quadrature(p, lattice)
    t = _strauss_counts(p, quad, radius)
    s = int(t[:N].sum())
    cands = [(0.0, _profile_loglik(0.0, s, t, w, N))]
    if s == 0:
        # no close pairs: gamma -> 0 is allowed, gamma^0 = 1
        z0 = np.sum(w[t == 0])
        cands.append((-math.inf, N * math.log(N / z0) - N))
    res = minimize_scalar(
        lambda th: -_profile_loglik(th, s, t, w, N), bounds=(LOG_GAMMA_MIN, 0.0), method="bounded"
    )
    if not res.success:
        raise FitError(f"Strauss profile search failed at R={radius}", {"message": res.message, "x": res.x})
    cands.append((float(res.x), -float(res.fun)))
    theta, ll = max(cands, key=lambda c: c[1])
    gamma = 0.0 if theta == -math.inf else math.exp(theta)
    beta = N / np.sum(w * (t == 0 if gamma == 0.0 else np.exp(theta * t)))
    return StraussParams(float(beta), min(gamma, 1.0), radius), ll


def fit_strauss(p: PointPattern, R_grid, lattice: int = DUMMY_LATTICE) -> FitResult:
    """Maximum profile pseudolikelihood over ``R_grid``, ``gamma`` restricted to ``[0, 1]``.

    For each ``R`` the pseudolikelihood is maximised over ``(beta, gamma)``:
    ``beta`` in closed form, ``log gamma`` by bounded Brent search. The
    endpoint ``gamma = 1`` is kept when it wins.
    """
    if len(p) < 2:
        raise ValueError("Strauss fitting needs at least two points")
    R_grid = [float(r) for r in np.atleast_1d(R_grid)]
    if not R_grid or min(R_grid) <= 0:
        raise ValueError("R_grid must hold positive radii")
    cands = tuple(_fit_strauss_at(p, r, lattice) for r in R_grid)
    best, ll = max(cands, key=lambda c: c[1])
    assert all(ll >= c[1] for c in cands)
    return FitResult(best, ll, degenerate=best.gamma >= 1.0, candidates=cands)


def lgcp_k_model(r: np.ndarray, sigma2: float, scale: float, nodes: int = K_MODEL_NODES) -> np.ndarray:
    """``K(r) = int_0^r 2 pi s exp(sigma2 exp(-s/scale)) ds`` by the trapezoid rule."""
    r = np.asarray(r, dtype=float)
    s = r[:, None] * np.linspace(0.0, 1.0, nodes)[None, :]
    f = 2 * np.pi * s * np.exp(sigma2 * np.exp(-s / scale))
    return trapezoid(f, s, axis=1)


def _contrast(k_hat, r, sigma2, scale, q):
    d = np.maximum(k_hat, 0.0) ** q - lgcp_k_model(r, sigma2, scale) ** q
    return float(trapezoid(d * d, r))


def fit_lgcp(
    p: PointPattern,
    grid: DistanceGrid,
    exponent: float = CONTRAST_EXPONENT,
    sigma2_bounds=(0.0, 10.0),
    scale_bounds=(1e-3, 0.5),
) -> FitResult:
    """Minimum contrast on ``K^exponent`` over ``grid``, then ``mu = log(N/area) - sigma2/2``."""
    if len(p) < 2:
        raise ValueError("LGCP fitting needs at least two points")
    r = grid.r
    k_hat = k_function(p, grid).values
    bounds = [sigma2_bounds, scale_bounds]
    best = None
    for s0 in (0.1, 0.6, 2.0):
        for c0 in (0.02, 0.05, 0.15):
            res = minimize(
                lambda x: _contrast(k_hat, r, x[0], x[1], exponent),
                x0=[s0, c0],
                method="Nelder-Mead",
                bounds=bounds,
                options={"xatol": 1e-6, "fatol": 1e-12, "maxiter": 2000},
            )
            if best is None or res.fun < best.fun:
                best = res
    if not np.isfinite(best.fun):
        raise FitError("LGCP minimum contrast failed", {"message": best.message, "x": best.x})
    sigma2, scale = float(best.x[0]), float(best.x[1])
    mu = math.log(len(p) / p.window.area()) - sigma2 / 2
    return FitResult(LgcpParams(mu, sigma2, scale), float(best.fun), degenerate=sigma2 < 1e-6)


FAMILIES = ("poisson", "strauss", "lgcp")


def fit_family(p: PointPattern, family: str, *, R_grid=None, grid: DistanceGrid | None = None) -> FitResult:
    if family == "poisson":
        return fit_poisson(p)
    if family == "strauss":
        return fit_strauss(p, R_grid if R_grid is not None else np.linspace(0.01, 0.06, 11))
    if family == "lgcp":
        return fit_lgcp(p, grid if grid is not None else DistanceGrid.default(p.window))
    raise ValueError(f"unknown family {family!r}; choose from {FAMILIES}")


def build_mixture_null(patterns, family: str, *, R_grid=None, grid=None):
    """Fit each pattern separately and return ``(Mixture, fits)``."""
    patterns = list(patterns)
    if not patterns:
        raise ValueError("need at least one pattern")
    fits = [fit_family(p, family, R_grid=R_grid, grid=grid) for p in patterns]
    return Mixture(tuple(f.params for f in fits)), fits


def write_fit_report(fits, path) -> None:
    """One line per pattern: index, fitted model string, objective, degenerate flag."""
    lines = ["pattern_index,model,objective,degenerate"]
    lines.extend(
        f"{i},{format_model(f.params)},{f.objective:.17g},{int(f.degenerate)}" for i, f in enumerate(fits)
    )
    Path(path).write_text("\n".join(lines) + "\n")
