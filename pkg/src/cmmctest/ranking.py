"""Pointwise ranks and the extreme rank length (ERL) ordering of curves.

Ranks are integers: at each distance, a curve's two-sided rank is
``min(1 + #{strictly smaller}, 1 + #{strictly larger})``. Tied values
therefore share the most extreme rank. Pointwise p-values are these ranks
divided by the set size, and a curve's ERL score is its sorted vector of
pointwise p-values. ERL scores are compared lexicographically, smaller
meaning more extreme.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np
from scipy.stats import rankdata


class Order(Enum):
    PRECEDES = -1
    EQUIVALENT = 0
    SUCCEEDS = 1


@dataclass(frozen=True, eq=False)
class PointwisePValues:
    u: np.ndarray

    def __post_init__(self):
        u = np.array(self.u, dtype=float).ravel()
        if np.any((u <= 0) | (u > 1)):
            raise ValueError("pointwise p-values must lie in (0, 1]")
        object.__setattr__(self, "u", u)


@dataclass(frozen=True, eq=False)
class ErlScore:
    sorted_u: np.ndarray

    def __post_init__(self):
        s = np.array(self.sorted_u, dtype=float).ravel()
        if np.any(np.diff(s) < 0):
            raise ValueError("ERL score must be sorted nondecreasing")
        object.__setattr__(self, "sorted_u", s)

    def __eq__(self, other):
        return isinstance(other, ErlScore) and np.array_equal(self.sorted_u, other.sorted_u)


def _as_matrix(curves) -> np.ndarray:
    """Accept an ``(K, M)`` array or a sequence of CurveStatistics sharing a grid."""
    if isinstance(curves, np.ndarray):
        return np.atleast_2d(curves)
    curves = list(curves)
    if curves and hasattr(curves[0], "grid"):
        grid = curves[0].grid
        for c in curves[1:]:
            if c.grid != grid:
                raise ValueError("curves do not share one distance grid")
        return np.vstack([c.values for c in curves])
    return np.atleast_2d(np.asarray(curves, dtype=float))


def pointwise_ranks(X: np.ndarray) -> np.ndarray:
    """Two-sided integer ranks of every row of ``X`` within its column."""
    X = np.asarray(X, dtype=float)
    up = rankdata(X, method="min", axis=0)
    down = rankdata(-X, method="min", axis=0)
    return np.minimum(up, down).astype(np.int64)


def pointwise_pvalues(curves, target_index: int) -> PointwisePValues:
    X = _as_matrix(curves)
    if X.shape[0] < 2:
        raise ValueError("need at least two curves to rank")
    return PointwisePValues(pointwise_ranks(X)[target_index] / X.shape[0])


def erl_score(pw: PointwisePValues) -> ErlScore:
    return ErlScore(np.sort(pw.u))


def erl_compare(a: ErlScore, b: ErlScore) -> Order:
    sa, sb = a.sorted_u, b.sorted_u
    if sa.shape != sb.shape:
        raise ValueError("ERL scores have different lengths")
    diff = np.flatnonzero(sa != sb)
    if diff.size == 0:
        return Order.EQUIVALENT
    return Order.PRECEDES if sa[diff[0]] < sb[diff[0]] else Order.SUCCEEDS


def erl_rank_vectors(X: np.ndarray) -> np.ndarray:
    """Sorted integer rank vectors (ERL scores times set size) for all rows."""
    return np.sort(pointwise_ranks(X), axis=1)


def count_preceding(S: np.ndarray, target: np.ndarray) -> np.ndarray | int:
    """Number of rows of ``S`` that are lexicographically ``<=`` ``target``.

    ``target`` may be one vector or a matrix of vectors (one count each).
    """
    S = np.asarray(S)
    T = np.atleast_2d(target)
    out = np.empty(T.shape[0], dtype=np.int64)
    for k, t in enumerate(T):
        ne = S != t
        first = ne.argmax(axis=1)
        differs = ne[np.arange(S.shape[0]), first]
        smaller = S[np.arange(S.shape[0]), first] < t[first]
        out[k] = np.count_nonzero(~differs | smaller)
    return out if np.ndim(target) == 2 else int(out[0])


def erl_counts(S: np.ndarray) -> np.ndarray:
    """For each row i, ``#{j : S_j <= S_i}`` lexicographically (itself included)."""
    uniq, inverse, counts = np.unique(S, axis=0, return_inverse=True, return_counts=True)
    return np.cumsum(counts)[inverse.ravel()]
