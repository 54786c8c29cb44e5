"""Simulators for Poisson, Strauss and log-Gaussian Cox point processes."""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import Union

import numpy as np
from numba import njit

from .patterns import PointPattern, RngStream, UNIT_SQUARE, Window, as_rng

DEFAULT_STRAUSS_STEPS = 100_000
DEFAULT_LGCP_GRID = 64
CHOLESKY_JITTER = 1e-10


class CovarianceError(ValueError):
    """Grid covariance could not be factorised."""


@dataclass(frozen=True)
class PoissonParams:
    intensity: float

    def __post_init__(self):
        if not (self.intensity >= 0 and np.isfinite(self.intensity)):
            raise ValueError("Poisson intensity must be finite and non-negative")


@dataclass(frozen=True)
class StraussParams:
    beta: float
    gamma: float
    radius: float

    def __post_init__(self):
        if not self.beta > 0:
            raise ValueError("Strauss beta must be positive")
        if not 0.0 <= self.gamma <= 1.0:
            raise ValueError("Strauss gamma must lie in [0, 1]")
        if not self.radius > 0:
            raise ValueError("Strauss interaction radius must be positive")


@dataclass(frozen=True)
class LgcpParams:
    mu: float
    sigma2: float
    scale: float

    def __post_init__(self):
        if not self.sigma2 >= 0:
            raise ValueError("LGCP variance must be non-negative")
        if not self.scale > 0:
            raise ValueError("LGCP covariance scale must be positive")


@dataclass(frozen=True)
class Mixture:
    """Equal-weight mixture of null models."""

    components: tuple

    def __post_init__(self):
        object.__setattr__(self, "components", tuple(self.components))
        if not self.components:
            raise ValueError("a mixture needs at least one component")


NullModel = Union[PoissonParams, StraussParams, LgcpParams, Mixture]


def simulate_poisson(params: PoissonParams, w: Window = UNIT_SQUARE, rng=0) -> PointPattern:
    rng = as_rng(rng)
    n = rng.poisson(params.intensity * w.area())
    x = rng.uniform(w.x_min, w.x_max, n)
    y = rng.uniform(w.y_min, w.y_max, n)
    return PointPattern(np.column_stack([x, y]), w)


@njit(cache=True)
def _count_close(px, py, n, ux, uy, r2, skip):
    c = 0
    for k in range(n):
        if k == skip:
            continue
        dx = px[k] - ux
        dy = py[k] - uy
        if dx * dx + dy * dy < r2:
            c += 1
    return c


@njit(cache=True)
def _strauss_bds(beta_area, gamma, r2, move, cand_x, cand_y, pick, accept, px, py):
    # px/py: preallocated buffers; state starts empty, returns final size.
    n = 0
    interacting = gamma < 1.0
    for s in range(move.shape[0]):
        mv = move[s]
        if mv < 1.0 / 3.0:
            g = 1.0
            if interacting:
                g = gamma ** _count_close(px, py, n, cand_x[s], cand_y[s], r2, -1)
            if accept[s] * (n + 1) < beta_area * g:
                px[n] = cand_x[s]
                py[n] = cand_y[s]
                n += 1
        elif mv < 2.0 / 3.0:
            if n == 0:
                continue
            i = min(int(pick[s] * n), n - 1)
            g = 1.0
            if interacting:
                g = gamma ** _count_close(px, py, n, px[i], py[i], r2, i)
            if accept[s] * beta_area * g < n:
                n -= 1
                px[i] = px[n]
                py[i] = py[n]
        else:
            if n == 0:
                continue
            i = min(int(pick[s] * n), n - 1)
            if interacting:
                g_old = gamma ** _count_close(px, py, n, px[i], py[i], r2, i)
                g_new = gamma ** _count_close(px, py, n, cand_x[s], cand_y[s], r2, i)
                if not accept[s] * g_old < g_new:
                    continue
            px[i] = cand_x[s]
            py[i] = cand_y[s]
    return n


def simulate_strauss(
    params: StraussParams,
    w: Window = UNIT_SQUARE,
    rng=0,
    n_steps: int = DEFAULT_STRAUSS_STEPS,
) -> PointPattern:
    """Approximate Strauss draw by birth-death-shift Metropolis-Hastings.

    The chain starts from the empty pattern and runs ``n_steps`` proposals,
    each a birth, death or uniform relocation with probability 1/3. The
    target density is proportional to ``beta**N * gamma**s(x)``, with
    ``s(x)`` the number of pairs closer than ``radius``.
    """
    if n_steps < 1:
        raise ValueError("n_steps must be at least 1")
    rng = as_rng(rng)
    g = rng.generator
    move = g.random(n_steps)
    cand_x = g.uniform(w.x_min, w.x_max, n_steps)
    cand_y = g.uniform(w.y_min, w.y_max, n_steps)
    pick = g.random(n_steps)
    accept = g.random(n_steps)
    px = np.empty(n_steps)
    py = np.empty(n_steps)
    n = _strauss_bds(
        params.beta * w.area(),
        float(params.gamma),
        params.radius**2,
        move,
        cand_x,
        cand_y,
        pick,
        accept,
        px,
        py,
    )
    return PointPattern(np.column_stack([px[:n], py[:n]]), w)


def lattice_centres(w: Window, grid_size: int) -> np.ndarray:
    """Cell centres of a ``grid_size`` x ``grid_size`` lattice, row-major in y."""
    xs = w.x_min + (np.arange(grid_size) + 0.5) * (w.width / grid_size)
    ys = w.y_min + (np.arange(grid_size) + 0.5) * (w.height / grid_size)
    gx, gy = np.meshgrid(xs, ys)
    return np.column_stack([gx.ravel(), gy.ravel()])


@lru_cache(maxsize=4)
def _correlation_factor(grid_size: int, scale: float, width: float, height: float) -> np.ndarray:
    from scipy.spatial.distance import pdist, squareform

    centres = lattice_centres(Window(0.0, width, 0.0, height), grid_size)
    corr = np.exp(-squareform(pdist(centres)) / scale)
    corr[np.diag_indices_from(corr)] += CHOLESKY_JITTER
    try:
        return np.linalg.cholesky(corr)
    except np.linalg.LinAlgError as exc:
        raise CovarianceError(
            f"exponential covariance (scale={scale}) on a {grid_size}x{grid_size} grid "
            "is not positive definite after jitter"
        ) from exc


def simulate_gaussian_field(params: LgcpParams, w: Window, rng, grid_size: int) -> np.ndarray:
    """Zero-mean Gaussian field on the lattice with covariance ``sigma2*exp(-d/scale)``."""
    rng = as_rng(rng)
    if params.sigma2 == 0:
        return np.zeros(grid_size * grid_size)
    L = _correlation_factor(grid_size, float(params.scale), w.width, w.height)
    return np.sqrt(params.sigma2) * (L @ rng.normal(size=grid_size * grid_size))


def simulate_lgcp(
    params: LgcpParams,
    w: Window = UNIT_SQUARE,
    rng=0,
    grid_size: int = DEFAULT_LGCP_GRID,
) -> PointPattern:
    """Log-Gaussian Cox process on a lattice discretisation.

    The log-intensity ``mu + Z`` is constant on each lattice cell; each cell
    receives a Poisson number of points placed uniformly inside it. The mean
    intensity is ``exp(mu + sigma2/2)``.
    """
    if grid_size < 16:
        raise ValueError("grid_size must be at least 16")
    rng = as_rng(rng)
    z = simulate_gaussian_field(params, w, rng, grid_size)
    dx, dy = w.width / grid_size, w.height / grid_size
    counts = rng.poisson(np.exp(params.mu + z) * dx * dy)
    cell = np.repeat(np.arange(grid_size * grid_size), counts)
    col, row = cell % grid_size, cell // grid_size
    x = w.x_min + (col + rng.uniform(size=cell.size)) * dx
    y = w.y_min + (row + rng.uniform(size=cell.size)) * dy
    # float rounding at the far edge must not leave the window
    x = np.minimum(x, w.x_max)
    y = np.minimum(y, w.y_max)
    return PointPattern(np.column_stack([x, y]), w)


def simulate_null(
    model: NullModel,
    w: Window = UNIT_SQUARE,
    rng=0,
    *,
    strauss_steps: int = DEFAULT_STRAUSS_STEPS,
    lgcp_grid: int = DEFAULT_LGCP_GRID,
) -> PointPattern:
    """Draw one pattern from ``model``; a mixture first picks a component uniformly."""
    rng = as_rng(rng)
    while isinstance(model, Mixture):
        model = model.components[int(rng.integers(len(model.components)))]
    if isinstance(model, PoissonParams):
        return simulate_poisson(model, w, rng)
    if isinstance(model, StraussParams):
        return simulate_strauss(model, w, rng, n_steps=strauss_steps)
    if isinstance(model, LgcpParams):
        return simulate_lgcp(model, w, rng, grid_size=lgcp_grid)
    raise TypeError(f"unknown model {model!r}")


def mean_intensity(model: NullModel) -> float:
    """Nominal intensity; for Strauss this is ``beta`` (the activity), not the mean."""
    if isinstance(model, Mixture):
        return float(np.mean([mean_intensity(c) for c in model.components]))
    if isinstance(model, PoissonParams):
        return model.intensity
    if isinstance(model, StraussParams):
        return model.beta
    return float(np.exp(model.mu + model.sigma2 / 2))


_FAMILIES = {"poisson": (PoissonParams, 1), "strauss": (StraussParams, 3), "lgcp": (LgcpParams, 3)}


def parse_model(spec: str) -> NullModel:
    """Parse ``poisson:lambda``, ``strauss:beta,gamma,R`` or ``lgcp:mu,sigma2,scale``.

    Several specs joined by ``+`` give an equal-weight mixture.
    """
    if "+" in spec:
        return Mixture(tuple(parse_model(part) for part in spec.split("+")))
    family, _, args = spec.strip().partition(":")
    family = family.lower()
    if family not in _FAMILIES:
        raise ValueError(f"unknown model family {family!r} in {spec!r}")
    cls, arity = _FAMILIES[family]
    values = [float(a) for a in args.split(",") if a.strip()]
    if len(values) != arity:
        raise ValueError(f"{family} takes {arity} parameter(s), got {spec!r}")
    return cls(*values)


def format_model(model: NullModel) -> str:
    if isinstance(model, Mixture):
        return "+".join(format_model(c) for c in model.components)
    if isinstance(model, PoissonParams):
        return f"poisson:{model.intensity:g}"
    if isinstance(model, StraussParams):
        return f"strauss:{model.beta:g},{model.gamma:g},{model.radius:g}"
    return f"lgcp:{model.mu:g},{model.sigma2:g},{model.scale:g}"
