"""Global rank envelopes and graphical reports of rejections.

Two envelope constructions are provided. :func:`rank_envelope` takes the
pointwise ``k``-th smallest and ``k``-th largest curve values. The
ERL envelope (:func:`erl_envelope`) is the pointwise hull of the curves whose
ERL count ``c_i = #{j : s_j <= s_i}`` is at least the critical rank. That
hull is what makes "the curve leaves the band" coincide exactly with
"the ERL p-value is at most alpha" whenever curve values are distinct at
each grid point (ERL score ties are fine). A plain order-statistic band with the same ``k`` does not
have this property once scores tie at the first few ranks.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .conformal import TestSetup, conformal_pvalues_parallel
from .multiplicity import REL_TOL, storey_bh, storey_estimator
from .ranking import ErlScore, _as_matrix, erl_counts, erl_rank_vectors
from .summaries import DistanceGrid


@dataclass(frozen=True, eq=False)
class Envelope:
    grid: DistanceGrid
    lower: np.ndarray
    upper: np.ndarray
    coverage_label: float
    critical_rank: int

    def __post_init__(self):
        lo = np.asarray(self.lower, dtype=float)
        hi = np.asarray(self.upper, dtype=float)
        if lo.shape != hi.shape or lo.size != len(self.grid):
            raise ValueError("envelope bounds do not match the grid")
        if np.any(lo > hi):
            raise ValueError("lower bound exceeds upper bound")
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)

    def exits(self, curve) -> np.ndarray:
        """Grid indices where ``curve`` is strictly outside the band."""
        v = np.asarray(curve, dtype=float)
        return np.flatnonzero((v < self.lower) | (v > self.upper))

    def contains(self, other: "Envelope") -> bool:
        return bool(np.all(self.lower <= other.lower) and np.all(self.upper >= other.upper))


@dataclass(frozen=True, eq=False)
class GraphicalReport:
    test_index: int
    curve: np.ndarray
    envelope: Envelope
    exit_indices: np.ndarray
    rejected: bool
    p_value: float
    threshold: float
    unrejectable: bool = False
    notes: tuple = field(default_factory=tuple)

    @property
    def exits(self) -> bool:
        return self.exit_indices.size > 0

    @property
    def consistent(self) -> bool:
        return self.exits == self.rejected


def _index_grid(M: int) -> DistanceGrid:
    return DistanceGrid(np.arange(1, M + 1, dtype=float))


def _score_matrix(scores) -> np.ndarray:
    if isinstance(scores, np.ndarray):
        return np.atleast_2d(scores)
    scores = list(scores)
    if scores and isinstance(scores[0], ErlScore):
        return np.vstack([s.sorted_u for s in scores])
    return np.atleast_2d(np.asarray(scores))


def critical_rank_from_counts(counts, alpha: float) -> int:
    """``max{k : #{i : c_i < k} <= alpha K}`` for ERL counts ``c``."""
    c = np.sort(np.asarray(counts, dtype=np.int64))
    K = c.size
    budget = alpha * K * (1 + REL_TOL)
    k = 1
    for cand in range(2, K + 1):
        if np.searchsorted(c, cand, side="left") <= budget:
            k = cand
        else:
            break
    return k


def critical_rank(scores, alpha: float) -> int:
    """Critical rank ``k_alpha`` from ERL scores (ErlScores or a score matrix), one per curve.

    Curves with fewer than ``k_alpha`` curves at least as extreme as themselves
    are the ones dropped from the envelope; there are at most ``alpha K`` of them.
    """
    S = _score_matrix(scores)
    if S.shape[0] < 2:
        raise ValueError("need at least two curves")
    if not 0 < alpha < 1:
        raise ValueError("alpha must lie in (0, 1)")
    return critical_rank_from_counts(erl_counts(S), alpha)


def rank_envelope(curves, k: int, grid: DistanceGrid | None = None, coverage_label: float = math.nan) -> Envelope:
    """Pointwise ``k``-th smallest and ``k``-th largest values."""
    X = _as_matrix(curves)
    K = X.shape[0]
    if not 1 <= k <= math.ceil(K / 2):
        raise ValueError(f"k must lie in 1..{math.ceil(K / 2)} for {K} curves")
    if grid is None:
        grid = getattr(list(curves)[0], "grid", None) if not isinstance(curves, np.ndarray) else None
    S = np.sort(X, axis=0)
    return Envelope(grid if grid is not None else _index_grid(X.shape[1]), S[k - 1], S[K - k], coverage_label, k)


def erl_hull(curves, k: int, grid: DistanceGrid | None = None, coverage_label: float = math.nan) -> Envelope:
    """Pointwise min/max over the curves with ERL count at least ``k``."""
    X = _as_matrix(curves)
    c = erl_counts(erl_rank_vectors(X))
    if not 1 <= k <= c.max():
        raise ValueError("k leaves no curve in the envelope")
    keep = X[c >= k]
    return Envelope(grid if grid is not None else _index_grid(X.shape[1]), keep.min(axis=0), keep.max(axis=0), coverage_label, k)


def erl_envelope(curves, alpha: float, grid: DistanceGrid | None = None) -> Envelope:
    """Global ERL envelope at level ``alpha`` over all rows of ``curves``."""
    X = _as_matrix(curves)
    k = critical_rank(erl_rank_vectors(X), alpha)
    return erl_hull(X, k, grid, 1 - alpha)


def single_test_report(null_curves, test_curve, alpha: float, grid: DistanceGrid | None = None) -> GraphicalReport:
    """Envelope over the ``n`` null curves and the test curve; exit iff ``p <= alpha``."""
    nulls = _as_matrix(null_curves)
    t = np.asarray(getattr(test_curve, "values", test_curve), dtype=float).ravel()
    X = np.vstack([nulls, t])
    S = erl_rank_vectors(X)
    c = erl_counts(S)
    K = X.shape[0]
    k = critical_rank_from_counts(c, alpha)
    env = erl_hull(X, k, grid, 1 - alpha)
    p = c[-1] / K
    return GraphicalReport(0, t, env, env.exits(t), bool(p <= alpha * (1 + REL_TOL)), p, alpha, alpha * K < 1)


def storey_bh_envelopes(
    setup: TestSetup, alpha: float, lam: float = 0.5, pool: str = "all", grid: DistanceGrid | None = None
) -> list:
    """One report per test point for Storey-BH on parallel ERL p-values.

    The test with the ``j``-th smallest p-value is shown against the envelope
    at level ``t_j = j alpha / (m pi0_hat)``. Rejected tests below the step-up
    cut ``k`` are shown at ``t_k`` instead, the level they were rejected at.
    ``pool="all"`` builds every envelope over all ``n + m`` curves;
    ``pool="parallel"`` uses the nulls plus the test's own curve, matching
    the ranking behind its p-value. Only the latter guarantees that a test
    exits its band exactly when it is rejected; under ``"all"`` the other
    test curves can widen the band.
    """
    if pool not in ("all", "parallel"):
        raise ValueError("pool must be 'all' or 'parallel'")
    n, m = setup.n, setup.m
    pv = conformal_pvalues_parallel(setup)
    rej = storey_bh(pv, alpha, lam)
    pi0 = storey_estimator(pv.p, lam)
    order = np.argsort(pv.p, kind="stable")
    k_cut = rej.n_rejected
    grid = grid if grid is not None else _index_grid(setup.null_curves.shape[1])

    if pool == "all":
        X_all = np.vstack([setup.null_curves, setup.test_curves])
        c_all = erl_counts(erl_rank_vectors(X_all))

    reports = [None] * m
    for pos, j in enumerate(order, start=1):
        level = max(pos, k_cut) * alpha / (m * pi0) if j in rej.rejected else pos * alpha / (m * pi0)
        level = min(level, 1 - 1e-12)
        curve = setup.test_curves[j]
        if pool == "all":
            k = critical_rank_from_counts(c_all, level)
            env = erl_hull(X_all, k, grid, 1 - level)
        else:
            X = np.vstack([setup.null_curves, curve])
            env = erl_hull(X, critical_rank_from_counts(erl_counts(erl_rank_vectors(X)), level), grid, 1 - level)
        unrejectable = level * (n + 1) < 1
        reports[j] = GraphicalReport(
            int(j), curve, env, env.exits(curve), j in rej.rejected, float(pv.p[j]), float(level), unrejectable
        )
    return reports


def write_envelope(report: GraphicalReport, path) -> None:
    env = report.envelope
    flags = np.zeros(len(env.grid), dtype=int)
    flags[report.exit_indices] = 1
    lines = ["r,lower,upper,curve_value,exit_flag"]
    lines.extend(
        f"{r:.17g},{lo:.17g},{hi:.17g},{v:.17g},{f}"
        for r, lo, hi, v, f in zip(env.grid.r, env.lower, env.upper, report.curve, flags)
    )
    Path(path).write_text("\n".join(lines) + "\n")


def write_manifest(reports, path) -> None:
    lines = ["test_index,p_value,threshold,critical_rank,rejected,unrejectable,n_exits"]
    lines.extend(
        f"{r.test_index},{r.p_value:.17g},{r.threshold:.17g},{r.envelope.critical_rank},"
        f"{int(r.rejected)},{int(r.unrejectable)},{r.exit_indices.size}"
        for r in reports
    )
    Path(path).write_text("\n".join(lines) + "\n")
