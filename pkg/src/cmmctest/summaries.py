"""Functional summary statistics on a fixed distance grid.

All estimators canonicalise the point order first, so results are
bit-identical under any permutation of the input points.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path

import numpy as np
from scipy.spatial import cKDTree

from .patterns import DegeneratePatternError, PointPattern, Window
from .generators import lattice_centres

J_FLOOR = 1e-6
F_LATTICE = 64


@dataclass(frozen=True, eq=False)
class DistanceGrid:
    r: np.ndarray

    def __post_init__(self):
        r = np.array(self.r, dtype=float).ravel()
        if r.size < 2:
            raise ValueError("a distance grid needs at least two values")
        if r[0] <= 0 or np.any(np.diff(r) <= 0):
            raise ValueError("grid values must be positive and strictly increasing")
        r.setflags(write=False)
        object.__setattr__(self, "r", r)

    def __len__(self):
        return self.r.size

    def __eq__(self, other):
        return isinstance(other, DistanceGrid) and np.array_equal(self.r, other.r)

    def __hash__(self):
        return hash(self.r.tobytes())

    def check_window(self, w: Window) -> None:
        if self.r[-1] >= 0.5 * min(w.width, w.height):
            raise ValueError("grid extends beyond half the shorter window side")

    @classmethod
    def default(cls, w: Window | None = None, size: int = 64, fraction: float = 0.25) -> "DistanceGrid":
        """``size`` points from ``rmax/size`` to ``rmax``, ``rmax`` a quarter of the shorter side."""
        side = 1.0 if w is None else min(w.width, w.height)
        rmax = fraction * side
        return cls(np.linspace(rmax / size, rmax, size))


@dataclass(frozen=True, eq=False)
class CurveStatistic:
    grid: DistanceGrid
    values: np.ndarray
    kind: str

    def __post_init__(self):
        v = np.array(self.values, dtype=float).ravel()
        if v.size != len(self.grid):
            raise ValueError("curve length does not match its grid")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    def __eq__(self, other):
        return (
            isinstance(other, CurveStatistic)
            and self.kind == other.kind
            and self.grid == other.grid
            and np.array_equal(self.values, other.values)
        )


def _canonical(p: PointPattern) -> np.ndarray:
    pts = p.points
    return pts[np.lexsort((pts[:, 1], pts[:, 0]))]


def k_function(p: PointPattern, grid: DistanceGrid) -> CurveStatistic:
    """Ripley's K with translation edge correction.

    ``K(r) = area / (N(N-1)) * sum_{i != j} 1[d_ij <= r] e_ij`` with
    ``e_ij = area / ((W - |dx|)(H - |dy|))``.
    """
    n = len(p)
    if n < 2:
        raise DegeneratePatternError("K-function needs at least two points")
    w = p.window
    pts = _canonical(p)
    i, j = np.triu_indices(n, k=1)
    dx = np.abs(pts[i, 0] - pts[j, 0])
    dy = np.abs(pts[i, 1] - pts[j, 1])
    d = np.sqrt(dx * dx + dy * dy)
    keep = d <= grid.r[-1]
    d, dx, dy = d[keep], dx[keep], dy[keep]
    area = w.area()
    weight = area / ((w.width - dx) * (w.height - dy))
    order = np.lexsort((weight, d))
    cum = np.concatenate([[0.0], np.cumsum(weight[order])])
    idx = np.searchsorted(d[order], grid.r, side="right")
    values = 2.0 * area * cum[idx] / (n * (n - 1))
    return CurveStatistic(grid, values, "K")


def centered_l_function(p: PointPattern, grid: DistanceGrid) -> CurveStatistic:
    k = k_function(p, grid)
    return CurveStatistic(grid, np.sqrt(k.values / np.pi) - grid.r, "centered_L")


@lru_cache(maxsize=8)
def _query_lattice(w: Window, size: int):
    q = lattice_centres(w, size)
    return q, w.boundary_distance(q)


def _border_cdf(dist: np.ndarray, border: np.ndarray, r: np.ndarray) -> np.ndarray:
    # reduced-sample estimator: P(d <= r) among locations at least r from the edge
    num = np.array([np.count_nonzero((dist <= rr) & (border >= rr)) for rr in r], dtype=float)
    den = np.array([np.count_nonzero(border >= rr) for rr in r], dtype=float)
    with np.errstate(invalid="ignore", divide="ignore"):
        return np.where(den > 0, num / np.where(den > 0, den, 1.0), np.nan)


def g_function(p: PointPattern, grid: DistanceGrid) -> np.ndarray:
    """Border-corrected nearest-neighbour distance distribution."""
    pts = _canonical(p)
    if len(pts) < 2:
        nn = np.full(len(pts), np.inf)
    else:
        nn = cKDTree(pts).query(pts, k=2)[0][:, 1]
    return _border_cdf(nn, p.window.boundary_distance(pts), grid.r)


def f_function(p: PointPattern, grid: DistanceGrid, lattice: int = F_LATTICE) -> np.ndarray:
    """Border-corrected empty-space function from a lattice of query points."""
    q, qb = _query_lattice(p.window, lattice)
    e = cKDTree(_canonical(p)).query(q, k=1)[0]
    return _border_cdf(e, qb, grid.r)


def j_function(p: PointPattern, grid: DistanceGrid, lattice: int = F_LATTICE) -> CurveStatistic:
    """``J = (1 - G) / (1 - F)``.

    Where ``1 - F`` drops below ``J_FLOOR`` (or an estimate is unavailable)
    the value at the last valid distance is carried forward. If even the
    first distance is invalid the curve is 1.
    """
    if len(p) == 0:
        raise DegeneratePatternError("J-function needs at least one point")
    G = g_function(p, grid)
    F = f_function(p, grid, lattice)
    one_f = 1.0 - F
    valid = np.isfinite(G) & np.isfinite(F) & (one_f >= J_FLOOR)
    # once invalid, stay invalid: hold the last valid value for the rest
    valid = np.logical_and.accumulate(valid)
    values = np.ones(len(grid))
    if valid.any():
        last = np.flatnonzero(valid)[-1]
        values[: last + 1] = (1.0 - G[: last + 1]) / one_f[: last + 1]
        values[last + 1 :] = values[last]
    return CurveStatistic(grid, values, "J")


STATISTICS = {"centered_L": centered_l_function, "J": j_function, "K": k_function}


def curve_matrix(patterns, grid: DistanceGrid, statistic: str = "centered_L") -> np.ndarray:
    """Stack statistics of many patterns into an ``(len(patterns), M)`` array.

    A pattern too sparse for the statistic gets ``+inf`` at every distance.
    This ranks it as maximally extreme instead of aborting a Monte Carlo run.
    """
    fn = STATISTICS[statistic]
    out = np.empty((len(patterns), len(grid)))
    for k, pat in enumerate(patterns):
        try:
            out[k] = fn(pat, grid).values
        except DegeneratePatternError:
            out[k] = np.inf
    return out


def write_curve(curve: CurveStatistic, path) -> None:
    lines = ["r,value"]
    lines.extend(f"{r:.17g},{v:.17g}" for r, v in zip(curve.grid.r, curve.values))
    Path(path).write_text("\n".join(lines) + "\n")


def read_curve(path, kind: str = "unknown") -> CurveStatistic:
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    return CurveStatistic(DistanceGrid(data[:, 0]), data[:, 1], kind)
