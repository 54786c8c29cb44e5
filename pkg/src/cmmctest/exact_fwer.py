"""Exact finite-sample distribution of conformal p-values.

Everything here is exact rational arithmetic on :class:`fractions.Fraction`.
Conformal p-values live on the lattice ``{1, ..., n+1}/(n+1)``; functions
take and return lattice indices ``j`` rather than the p-values themselves.
Integer thresholds ``t`` mean "reject when ``p <= t/(n+1)``".
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache
from typing import Callable, Sequence


def as_fraction(x) -> Fraction:
    """Exact rational for ``x``; floats go through their shortest decimal repr (0.05 -> 1/20)."""
    if isinstance(x, Fraction):
        return x
    if isinstance(x, float):
        return Fraction(repr(x))
    return Fraction(x)


def _null_factor(n: int, m: int) -> Fraction:
    return Fraction(math.factorial(n) * math.factorial(m), math.factorial(n + m))


def joint_pmf(n: int, m: int, j: Sequence[int]) -> Fraction:
    """``P(p = j/(n+1)) = n!/(n+m)! * prod_k M_k(j)!``, with ``M_k`` the multiplicity of ``k`` in ``j``."""
    j = tuple(int(v) for v in j)
    if n < 1 or m < 1 or len(j) != m:
        raise ValueError("need n >= 1, m >= 1 and one index per test point")
    if any(v < 1 or v > n + 1 for v in j):
        raise ValueError(f"lattice indices must lie in 1..{n + 1}")
    num = math.factorial(n)
    for mult in Counter(j).values():
        num *= math.factorial(mult)
    return Fraction(num, math.factorial(n + m))


def independent_uniform_pmf(n: int, m: int, j: Sequence[int]) -> Fraction:
    """Joint pmf of ``m`` independent uniforms on the same lattice."""
    return Fraction(1, (n + 1) ** m)


def order_pmf(n: int, m: int, j: Sequence[int]) -> Fraction:
    """Ordered p-values are uniform on the nondecreasing lattice vectors."""
    j = tuple(int(v) for v in j)
    if len(j) != m or any(v < 1 or v > n + 1 for v in j):
        return Fraction(0)
    if any(a > b for a, b in zip(j, j[1:])):
        return Fraction(0)
    return _null_factor(n, m)


def marginal_order_pmf(n: int, m: int, i: int, j: int) -> Fraction:
    """Negative hypergeometric law of the ``i``-th smallest p-value."""
    if not (1 <= i <= m and 1 <= j <= n + 1):
        raise ValueError("need 1 <= i <= m and 1 <= j <= n+1")
    return _null_factor(n, m) * math.comb(j + i - 2, i - 1) * math.comb(n + m - j - i + 1, m - i)


def hockey_stick_sum(n: int, m: int) -> Fraction:
    """``sum_{y=1}^n (y+m-1)!/(y-1)! = (n+m)! / ((m+1)(n-1)!)``; both sides are computed and must agree."""
    if n < 1 or m < 0:
        raise ValueError("need n >= 1 and m >= 0")
    closed = Fraction(math.factorial(n + m), (m + 1) * math.factorial(n - 1))
    direct = sum(Fraction(math.factorial(y + m - 1), math.factorial(y - 1)) for y in range(1, n + 1))
    if closed != direct:
        raise ArithmeticError(f"hockey-stick identity failed at n={n}, m={m}")
    return closed


@lru_cache(maxsize=None)
def _bernoulli_table(r: int) -> tuple:
    B = [Fraction(1)]
    for k in range(1, r + 1):
        B.append(1 - sum(math.comb(k, i) * B[i] / (k - i + 1) for i in range(k)))
    return tuple(B)


def bernoulli_number(r: int) -> Fraction:
    """Bernoulli number with the ``B_1 = +1/2`` convention."""
    if r < 0:
        raise ValueError("r must be non-negative")
    return _bernoulli_table(r)[r]


def faulhaber_sum(x: int, power: int) -> Fraction:
    """``sum_{k=1}^x k**power`` through Faulhaber's formula."""
    B = _bernoulli_table(power)
    return sum(
        math.comb(power + 1, r) * B[r] * Fraction(x) ** (power + 1 - r) for r in range(power + 1)
    ) / (power + 1)


@dataclass(frozen=True)
class PolynomialQ:
    """Polynomial with exact rational coefficients ``a_0 .. a_d``."""

    coeffs: tuple

    def __post_init__(self):
        c = [as_fraction(a) for a in self.coeffs]
        while len(c) > 1 and c[-1] == 0:
            c.pop()
        object.__setattr__(self, "coeffs", tuple(c) or (Fraction(0),))

    @property
    def degree(self) -> int:
        return -1 if self.coeffs == (0,) else len(self.coeffs) - 1

    def __call__(self, x) -> Fraction:
        acc = Fraction(0)
        for a in reversed(self.coeffs):
            acc = acc * x + a
        return acc


def _check_thresholds(n: int, thresholds) -> tuple:
    t = tuple(int(v) for v in thresholds)
    if any(v < 0 or v > n for v in t):
        raise ValueError(f"integer thresholds must lie in 0..{n}")
    if any(a > b for a, b in zip(t, t[1:])):
        raise ValueError("thresholds must be nondecreasing")
    return t


def _sum_from(poly: tuple, t: int) -> tuple:
    """Coefficients of ``x -> sum_{y=t+1}^{x} poly(y)``, one degree higher."""
    d = len(poly)
    B = _bernoulli_table(d)
    out = [Fraction(0)] * (d + 1)
    for j, a in enumerate(poly):
        if a == 0:
            continue
        scale = a / (j + 1)
        for i in range(1, j + 2):
            out[i] += scale * math.comb(j + 1, i) * B[j + 1 - i]
        out[0] -= scale * sum(math.comb(j + 1, r) * B[r] * Fraction(t) ** (j + 1 - r) for r in range(j + 1))
    return tuple(out)


def grid_polynomials(thresholds) -> list:
    """The nested-sum polynomials ``P_1 .. P_m``; ``P_k`` starts its sum at ``t_k + 1``."""
    polys = []
    current = (Fraction(1),)
    for t in thresholds:
        current = _sum_from(current, int(t))
        polys.append(PolynomialQ(current))
    return polys


def grid_polynomial(n: int, thresholds) -> Fraction:
    """Number of ``x_1 <= ... <= x_m`` with ``x_k`` in ``t_k+1 .. n+1``, via the coefficient recursion."""
    t = _check_thresholds(n, thresholds)
    if not t:
        return Fraction(1)
    return grid_polynomials(t)[-1](n + 1)


def exact_fwer(n: int, thresholds) -> Fraction:
    """FWER when all ``m`` tests are true nulls and ``p_(k)`` is rejected below ``t_k/(n+1)``."""
    t = _check_thresholds(n, thresholds)
    m = len(t)
    if m == 0:
        return Fraction(0)
    return 1 - _null_factor(n, m) * grid_polynomial(n, t)


def exact_fwer_partial_nulls(n: int, m: int, m0: int, thresholds) -> Fraction:
    """FWER when the ``m - m0`` alternatives take the smallest p-values.

    A true null ranked ``i``-th among the nulls then sits at overall
    position ``i + m - m0`` and faces that threshold.
    """
    t = _check_thresholds(n, thresholds)
    if len(t) != m:
        raise ValueError("need m thresholds")
    if not 0 <= m0 <= m:
        raise ValueError("need 0 <= m0 <= m")
    if m0 == 0:
        return Fraction(0)
    return exact_fwer(n, t[m - m0 :])


def lattice_floor(level, n: int) -> int:
    """``floor(level * (n+1))`` computed exactly."""
    return math.floor(as_fraction(level) * (n + 1))


def hochberg_integer_thresholds(n: int, m: int, alpha) -> tuple:
    a = as_fraction(alpha)
    return tuple(math.floor(a * (n + 1) / (m - j + 1)) for j in range(1, m + 1))


def bh_integer_thresholds(n: int, m: int, q_star) -> tuple:
    q = as_fraction(q_star)
    return tuple(math.floor(q * j * (n + 1) / m) for j in range(1, m + 1))


def sidak_integer_threshold(n: int, m0_hat: int, alpha) -> int:
    """``floor((1 - (1-alpha)^(1/m0_hat)) (n+1))`` without floating point.

    It is the largest ``t`` with ``((n+1-t)/(n+1))^m0_hat >= 1 - alpha``.
    """
    keep = 1 - as_fraction(alpha)

    def ok(t):
        return Fraction(n + 1 - t, n + 1) ** m0_hat >= keep

    t = int((1 - float(keep) ** (1.0 / m0_hat)) * (n + 1))
    t = min(max(t, 0), n + 1)
    while t > 0 and not ok(t):
        t -= 1
    while t < n + 1 and ok(t + 1):
        t += 1
    return t


def sidak_exact_fwer(n: int, m: int, alpha, m0_hat: int | None = None) -> Fraction:
    """``1 - n!/(n+m)! * prod_{k=0}^{m-1} (n+1-t+k)`` for the constant Šidák threshold."""
    t = sidak_integer_threshold(n, m if m0_hat is None else m0_hat, alpha)
    prod = 1
    for k in range(m):
        prod *= n + 1 - t + k
    return 1 - Fraction(math.factorial(n) * prod, math.factorial(n + m))


def min_pvalue_cdf(n: int, m: int, t: int) -> Fraction:
    """``P(p_(1) <= t/(n+1))`` as a cumulative sum of the marginal law."""
    return sum((marginal_order_pmf(n, m, 1, j) for j in range(1, t + 1)), Fraction(0))


def sidak_sharp_threshold(n: int, m: int, alpha) -> int:
    """Largest integer ``t`` with ``P(p_(1) <= t/(n+1)) <= alpha``."""
    a = as_fraction(alpha)
    cdf = Fraction(0)
    t = 0
    for j in range(1, n + 2):
        cdf += marginal_order_pmf(n, m, 1, j)
        if cdf > a:
            break
        t = j
    return t


def mtp2_counterexample_check(pmf: Callable | None = None) -> bool:
    """True iff ``f(x) f(y) > f(min(x,y)) f(max(x,y))`` at ``n=2, m=3``, ``x=(2,2,2)``, ``y=(1,3,1)``."""
    f = joint_pmf if pmf is None else pmf
    n, x, y = 2, (2, 2, 2), (1, 3, 1)
    lo = tuple(map(min, x, y))
    hi = tuple(map(max, x, y))
    return f(n, 3, x) * f(n, 3, y) > f(n, 3, lo) * f(n, 3, hi)


def fwer_procedure_thresholds(procedure: str, n: int, m: int, m0: int, alpha) -> tuple:
    """Integer thresholds for the curves shown against ``n``.

    ``sidak`` estimates ``m0`` exactly; ``sidak+1`` overestimates it by one.
    """
    if procedure == "hochberg":
        return hochberg_integer_thresholds(n, m, alpha)
    if procedure == "sidak":
        return (sidak_integer_threshold(n, m0, alpha),) * m
    if procedure == "sidak+1":
        return (sidak_integer_threshold(n, m0 + 1, alpha),) * m
    if procedure == "sidak_sharp":
        return (sidak_sharp_threshold(n, m0, alpha),) * m
    if procedure == "bh":
        return bh_integer_thresholds(n, m, alpha)
    raise ValueError(f"unknown procedure {procedure!r}")


def fwer_sweep(ns, m: int, m0: int, alphas, procedures=("hochberg", "sidak", "sidak+1")):
    """Rows ``(n, m, m0, procedure, alpha, fwer)`` with exact FWER values."""
    rows = []
    for alpha in alphas:
        for proc in procedures:
            for n in ns:
                t = fwer_procedure_thresholds(proc, n, m, m0, alpha)
                rows.append((n, m, m0, proc, alpha, exact_fwer_partial_nulls(n, m, m0, t)))
    return rows
