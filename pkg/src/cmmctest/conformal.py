"""Conformal p-values from ERL scores, and the naive MMCTest baseline.

Smaller ERL scores are more extreme. A test curve's p-value is
``(1 + #{nulls whose score <= the test score}) / (n + 1)``, where ``<=``
counts ERL-equivalent scores.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.stats import rankdata

from .ranking import _as_matrix, count_preceding, erl_rank_vectors

METHODS = ("joint_erl", "parallel_erl", "naive", "scalar")


@dataclass(frozen=True, eq=False)
class PValueVector:
    """Conformal or naive p-values for ``m`` test points.

    ``ties[j]`` is the number of null scores ERL-equivalent to test ``j``'s
    score; the exchangeability theory assumes it is zero.
    """

    p: np.ndarray
    method: str
    n_effective: int
    ties: np.ndarray | None = None

    def __post_init__(self):
        p = np.array(self.p, dtype=float).ravel()
        if np.any((p <= 0) | (p > 1)):
            raise ValueError("p-values must lie in (0, 1]")
        p.setflags(write=False)
        object.__setattr__(self, "p", p)

    def __len__(self):
        return self.p.size

    def __array__(self, dtype=None, copy=None):
        return self.p if dtype is None else self.p.astype(dtype)

    @property
    def tie_rate(self) -> float:
        if self.ties is None or self.p.size == 0:
            return 0.0
        return float(np.mean(np.asarray(self.ties) > 0))


@dataclass
class TestSetup:
    """Null and test curves evaluated on one common grid, as ``(n, M)`` and ``(m, M)`` arrays."""

    null_curves: np.ndarray
    test_curves: np.ndarray
    __test__ = False  # not a pytest class despite the name

    def __post_init__(self):
        self.null_curves = _as_matrix(self.null_curves).astype(float, copy=False)
        self.test_curves = _as_matrix(self.test_curves).astype(float, copy=False)
        if self.null_curves.shape[1] != self.test_curves.shape[1]:
            raise ValueError("null and test curves are on different grids")
        if len(self.null_curves) < 1 or len(self.test_curves) < 1:
            raise ValueError("need at least one null and one test curve")

    @property
    def n(self) -> int:
        return self.null_curves.shape[0]

    @property
    def m(self) -> int:
        return self.test_curves.shape[0]


def _counts_to_pvalues(counts, n, method, ties=None) -> PValueVector:
    return PValueVector((1 + np.asarray(counts)) / (n + 1), method, n, ties)


def conformal_pvalues_scalar(null_scores, test_scores) -> PValueVector:
    """Conformal p-values for scalar scores: ``(1 + #{s_i <= s_test}) / (n + 1)``."""
    null_scores = np.sort(np.asarray(null_scores, dtype=float).ravel())
    test_scores = np.asarray(test_scores, dtype=float).ravel()
    le = np.searchsorted(null_scores, test_scores, side="right")
    eq = le - np.searchsorted(null_scores, test_scores, side="left")
    return _counts_to_pvalues(le, null_scores.size, "scalar", eq)


def conformal_pvalues_joint(setup: TestSetup) -> PValueVector:
    """Rank all ``n + m`` curves together, then compare each test score to the nulls."""
    n = setup.n
    S = erl_rank_vectors(np.vstack([setup.null_curves, setup.test_curves]))
    nulls, tests = S[:n], S[n:]
    le = count_preceding(nulls, tests)
    eq = np.array([np.count_nonzero(np.all(nulls == t, axis=1)) for t in tests])
    return _counts_to_pvalues(le, n, "joint_erl", eq)


class _ParallelRanker:
    """ERL ranking of ``nulls + [one test curve]``, reusing the null-only ranks."""

    def __init__(self, nulls: np.ndarray):
        self.nulls = nulls
        # strictly-less and strictly-greater counts among the nulls alone
        self.less = rankdata(nulls, method="min", axis=0).astype(np.int64) - 1
        self.greater = rankdata(-nulls, method="min", axis=0).astype(np.int64) - 1

    def scores(self, t: np.ndarray):
        below = self.nulls < t
        above = self.nulls > t
        null_rank = 1 + np.minimum(self.less + above, self.greater + below)
        test_rank = 1 + np.minimum(below.sum(axis=0), above.sum(axis=0))
        return np.sort(null_rank, axis=1), np.sort(test_rank)

    def count(self, t: np.ndarray) -> tuple[int, int]:
        S, s = self.scores(t)
        le = count_preceding(S, s)
        eq = int(np.count_nonzero(np.all(S == s, axis=1)))
        return le, eq


def _parallel_counts(nulls, tests):
    ranker = _ParallelRanker(nulls)
    out = np.array([ranker.count(t) for t in tests], dtype=np.int64).reshape(-1, 2)
    return out[:, 0], out[:, 1]


def conformal_pvalues_parallel(setup: TestSetup) -> PValueVector:
    """Rank each test curve separately with the null curves (``n + 1`` curves at a time)."""
    le, eq = _parallel_counts(setup.null_curves, setup.test_curves)
    return _counts_to_pvalues(le, setup.n, "parallel_erl", eq)


def naive_mmctest_pvalues(null_curves, test_curves) -> PValueVector:
    """Independent Monte Carlo p-values: test ``j`` uses only the ``j``-th block of ``n/m`` nulls."""
    setup = TestSetup(null_curves, test_curves)
    n, m = setup.n, setup.m
    if n % m:
        raise ValueError(
            f"naive MMCTest needs m | n (n={n}, m={m}); trim the null sample to {n - n % m} curves"
        )
    b = n // m
    le = np.empty(m, dtype=np.int64)
    eq = np.empty(m, dtype=np.int64)
    for j in range(m):
        block = setup.null_curves[j * b : (j + 1) * b]
        cj, ej = _parallel_counts(block, setup.test_curves[j : j + 1])
        le[j], eq[j] = cj[0], ej[0]
    return _counts_to_pvalues(le, b, "naive", eq)


def conformal_pvalues(setup: TestSetup, method: str = "parallel_erl") -> PValueVector:
    if method == "parallel_erl":
        return conformal_pvalues_parallel(setup)
    if method == "joint_erl":
        return conformal_pvalues_joint(setup)
    if method == "naive":
        return naive_mmctest_pvalues(setup.null_curves, setup.test_curves)
    raise ValueError(f"unknown p-value method {method!r}")


def write_pvalues(pv: PValueVector, path) -> None:
    lines = ["test_index,p_value,method,n_effective"]
    lines.extend(f"{j},{p:.17g},{pv.method},{pv.n_effective}" for j, p in enumerate(pv.p))
    Path(path).write_text("\n".join(lines) + "\n")


def read_pvalues(path) -> PValueVector:
    rows = [line.split(",") for line in Path(path).read_text().splitlines()[1:] if line.strip()]
    rows.sort(key=lambda r: int(r[0]))
    return PValueVector([float(r[1]) for r in rows], rows[0][2], int(rows[0][3]))
