"""Multiple testing procedures, global-null tests and error bookkeeping.

All procedures take p-values as a PValueVector or any 1-d array-like and
return a :class:`RejectionSet` of zero-based test indices.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.stats import chi2

from .conformal import PValueVector, TestSetup, _parallel_counts

# Lattice p-values k/(n+1) and thresholds such as j*q/m coincide exactly in
# theory; float rounding of either side must not decide the comparison.
REL_TOL = 1e-12


class DependentPValuesError(ValueError):
    """A procedure requiring independent p-values was given conformal ones."""


@dataclass(frozen=True, eq=False)
class RejectionSet:
    rejected: frozenset
    thresholds: np.ndarray
    procedure: str
    p: np.ndarray = field(repr=False)

    @property
    def n_rejected(self) -> int:
        return len(self.rejected)

    def mask(self) -> np.ndarray:
        out = np.zeros(self.p.size, dtype=bool)
        out[list(self.rejected)] = True
        return out

    def threshold_for(self) -> np.ndarray:
        """Threshold each test's p-value was compared against (by its sorted position)."""
        order = np.argsort(self.p, kind="stable")
        out = np.empty(self.p.size)
        out[order] = self.thresholds
        return out


@dataclass(frozen=True)
class ErrorMetrics:
    V: int
    S: int
    R: int
    m0: int
    m: int

    @property
    def fdp(self) -> float:
        return self.V / max(1, self.R)

    @property
    def tdp(self) -> float:
        return self.S / max(1, self.m - self.m0)

    @property
    def any_false(self) -> bool:
        return self.V >= 1


def _values(p) -> np.ndarray:
    return np.asarray(p, dtype=float).ravel()


def _le(p, t):
    return p <= t * (1 + REL_TOL) + 1e-300


def step_up(p, thresholds, procedure: str = "step_up") -> RejectionSet:
    """Reject the ``k`` smallest p-values, ``k = max{j : p_(j) <= t_j}``."""
    p = _values(p)
    t = np.asarray(thresholds, dtype=float).ravel()
    if t.size != p.size:
        raise ValueError("need one threshold per p-value")
    if np.any(np.diff(t) < 0):
        raise ValueError("thresholds must be nondecreasing")
    order = np.argsort(p, kind="stable")
    passed = np.flatnonzero(_le(p[order], t))
    k = passed[-1] + 1 if passed.size else 0
    return RejectionSet(frozenset(order[:k].tolist()), t, procedure, p)


def _check_level(level, name="alpha"):
    if not 0 < level < 1:
        raise ValueError(f"{name} must lie in (0, 1), got {level}")


def bh_thresholds(m: int, q_star: float) -> np.ndarray:
    return np.arange(1, m + 1) * q_star / m


def bh_procedure(p, q_star: float) -> RejectionSet:
    _check_level(q_star, "q_star")
    p = _values(p)
    return step_up(p, bh_thresholds(p.size, q_star), "bh")


def snap_lambda(lam: float, n: int) -> float:
    """Nearest admissible Storey parameter ``K/(n+1)`` with ``K`` in ``1..n``."""
    k = min(max(int(round(lam * (n + 1))), 1), n)
    return k / (n + 1)


def storey_estimator(p, lam: float = 0.5) -> float:
    """Storey's ``pi0 = (1 + #{p > lam}) / (m (1 - lam))``, deliberately not capped at 1."""
    _check_level(lam, "lambda")
    if isinstance(p, PValueVector):
        k = lam * (p.n_effective + 1)
        if abs(k - round(k)) > 1e-9:
            warnings.warn(
                f"lambda={lam} is not of the form K/(n+1) for n={p.n_effective}; "
                "FDR control of Storey-BH with conformal p-values assumes it is",
                stacklevel=2,
            )
    v = _values(p)
    return (1 + np.count_nonzero(v > lam * (1 + REL_TOL))) / (v.size * (1 - lam))


def storey_bh(p, alpha: float, lam: float = 0.5) -> RejectionSet:
    """BH at level ``alpha / pi0_hat``."""
    _check_level(alpha)
    pi0 = storey_estimator(p, lam)
    v = _values(p)
    return step_up(v, bh_thresholds(v.size, alpha / pi0), "storey_bh")


def hochberg_thresholds(m: int, alpha: float) -> np.ndarray:
    return alpha / (m - np.arange(1, m + 1) + 1)


def hochberg_procedure(p, alpha: float) -> RejectionSet:
    _check_level(alpha)
    v = _values(p)
    return step_up(v, hochberg_thresholds(v.size, alpha), "hochberg")


def hommel_procedure(p, alpha: float) -> RejectionSet:
    """Hommel's closed Simes test.

    With ``j`` the largest subset size whose Simes test does not reject
    (``p_(m-j+k) > k alpha / j`` for all ``k``), reject every ``p <= alpha/j``;
    if every size rejects, reject all.
    """
    _check_level(alpha)
    v = _values(p)
    m = v.size
    s = np.sort(v)
    j_accept = 0
    for j in range(m, 0, -1):
        k = np.arange(1, j + 1)
        if np.all(~_le(s[m - j + k - 1], k * alpha / j)):
            j_accept = j
            break
    if j_accept == 0:
        rejected = frozenset(range(m))
        cut = alpha
    else:
        cut = alpha / j_accept
        rejected = frozenset(np.flatnonzero(_le(v, cut)).tolist())
    return RejectionSet(rejected, np.full(m, cut), "hommel", v)


def bonferroni(p, alpha: float, m0_hat: float | None = None) -> RejectionSet:
    v = _values(p)
    m0_hat = v.size if m0_hat is None else m0_hat
    if m0_hat < 1:
        raise ValueError("m0_hat must be at least 1")
    cut = alpha / m0_hat
    return RejectionSet(frozenset(np.flatnonzero(_le(v, cut)).tolist()), np.full(v.size, cut), "bonferroni", v)


def sidak_threshold(alpha: float, m0_hat: float) -> float:
    return -math.expm1(math.log1p(-alpha) / m0_hat)


def sidak(p, alpha: float, m0_hat: float | None = None) -> RejectionSet:
    v = _values(p)
    m0_hat = v.size if m0_hat is None else m0_hat
    if m0_hat < 1:
        raise ValueError("m0_hat must be at least 1")
    cut = sidak_threshold(alpha, m0_hat)
    return RejectionSet(frozenset(np.flatnonzero(_le(v, cut)).tolist()), np.full(v.size, cut), "sidak", v)


PROCEDURES = {
    "bh": lambda p, alpha, lam: bh_procedure(p, alpha),
    "storey_bh": lambda p, alpha, lam: storey_bh(p, alpha, lam),
    "hochberg": lambda p, alpha, lam: hochberg_procedure(p, alpha),
    "hommel": lambda p, alpha, lam: hommel_procedure(p, alpha),
    "bonferroni": lambda p, alpha, lam: bonferroni(p, alpha),
    "sidak": lambda p, alpha, lam: sidak(p, alpha),
}


def apply_procedure(name: str, p, alpha: float, lam: float = 0.5) -> RejectionSet:
    try:
        fn = PROCEDURES[name]
    except KeyError:
        raise ValueError(f"unknown procedure {name!r}; choose from {sorted(PROCEDURES)}") from None
    return fn(p, alpha, lam)


def error_metrics(rej: RejectionSet, truth, m: int) -> ErrorMetrics:
    """Tally false (V) and true (S) discoveries; ``truth`` holds the non-null indices."""
    truth = set(int(t) for t in truth)
    if any(t < 0 or t >= m for t in truth):
        raise ValueError("truth indices out of range")
    S = len(rej.rejected & truth)
    V = len(rej.rejected) - S
    return ErrorMetrics(V=V, S=S, R=V + S, m0=m - len(truth), m=m)


def fisher_statistic(p) -> float:
    return float(-2.0 * np.sum(np.log(_values(p))))


def global_null_fisher(p, alpha: float) -> bool:
    """Fisher combination test of the global null on independent p-values.

    Conformal p-values share a null sample and are dependent, so they are
    refused; raw arrays are taken as the caller's assertion of independence.
    """
    _check_level(alpha)
    if isinstance(p, PValueVector) and p.method != "naive":
        raise DependentPValuesError(
            f"Fisher's combination needs independent p-values; got method={p.method!r}"
        )
    v = _values(p)
    crit = chi2.ppf(1 - alpha, 2 * v.size)
    return fisher_statistic(v) >= crit * (1 - REL_TOL)


def concatenated_get_pvalue(setup: TestSetup, rng=None) -> float:
    """ERL p-value of the concatenated test curve against ``n/m`` concatenated null curves."""
    n, m, M = setup.n, setup.m, setup.null_curves.shape[1]
    if n % m:
        raise ValueError(f"concatenated GET needs m | n (n={n}, m={m})")
    order = np.arange(n) if rng is None else rng.generator.permutation(n)
    long_nulls = setup.null_curves[order].reshape(n // m, m * M)
    long_test = setup.test_curves.reshape(1, m * M)
    le, _ = _parallel_counts(long_nulls, long_test)
    return (1 + int(le[0])) / (n // m + 1)


def global_null_concatenated_get(setup: TestSetup, alpha: float, rng=None) -> bool:
    _check_level(alpha)
    return bool(_le(concatenated_get_pvalue(setup, rng), alpha))


def global_null_hochberg(p, alpha: float) -> bool:
    return hochberg_procedure(p, alpha).n_rejected >= 1


def write_rejections(rej: RejectionSet, path) -> None:
    thr = rej.threshold_for()
    mask = rej.mask()
    lines = ["test_index,p_value,threshold,rejected"]
    lines.extend(f"{j},{rej.p[j]:.17g},{thr[j]:.17g},{int(mask[j])}" for j in range(rej.p.size))
    Path(path).write_text("\n".join(lines) + "\n")
