import numpy as np
import pytest
from scipy import stats

from cmmctest.conformal import (
    PValueVector,
    TestSetup,
    conformal_pvalues,
    conformal_pvalues_joint,
    conformal_pvalues_parallel,
    conformal_pvalues_scalar,
    naive_mmctest_pvalues,
    read_pvalues,
    write_pvalues,
)
from cmmctest.exact_fwer import joint_pmf


def test_extreme_cases(rng):
    nulls = rng.normal(size=(20, 8))
    calm = np.median(nulls, axis=0)[None, :]
    wild = (np.abs(nulls).max(axis=0) + 10)[None, :]
    for fn in (conformal_pvalues_joint, conformal_pvalues_parallel):
        assert fn(TestSetup(nulls, wild)).p[0] == pytest.approx(1 / 21)
    # a pointwise-median curve has maximal ranks among n+1 curves
    assert conformal_pvalues_parallel(TestSetup(nulls, calm)).p[0] == pytest.approx(1.0)
    assert conformal_pvalues_joint(TestSetup(nulls, calm)).p[0] == pytest.approx(1.0)


def test_parallel_equals_joint_for_one_test(rng):
    for _ in range(50):
        nulls, test = rng.normal(size=(15, 6)), rng.normal(size=(1, 6))
        s = TestSetup(nulls, test)
        assert np.array_equal(conformal_pvalues_joint(s).p, conformal_pvalues_parallel(s).p)


def test_parallel_ignores_other_tests_and_null_order(rng):
    nulls, tests = rng.normal(size=(30, 5)), rng.normal(size=(4, 5))
    p = conformal_pvalues_parallel(TestSetup(nulls, tests)).p
    other = tests.copy()
    other[1:] = rng.normal(size=(3, 5)) * 5
    assert conformal_pvalues_parallel(TestSetup(nulls, other)).p[0] == p[0]
    shuffled = nulls[rng.permutation(30)]
    assert np.array_equal(conformal_pvalues_parallel(TestSetup(shuffled, tests)).p, p)


def test_parallel_matches_direct_ranking(rng):
    # direct re-ranking of the n+1 curves versus the incremental ranker
    from cmmctest.ranking import count_preceding, erl_rank_vectors

    nulls = rng.integers(0, 4, size=(25, 4)).astype(float)
    tests = rng.integers(0, 4, size=(6, 4)).astype(float)
    fast = conformal_pvalues_parallel(TestSetup(nulls, tests))
    for j, t in enumerate(tests):
        S = erl_rank_vectors(np.vstack([nulls, t]))
        assert fast.p[j] == (1 + count_preceding(S[:-1], S[-1])) / 26


def test_naive_blocks(rng):
    nulls, tests = rng.normal(size=(40, 5)), rng.normal(size=(4, 5))
    pv = naive_mmctest_pvalues(nulls, tests)
    assert pv.n_effective == 10 and pv.method == "naive"
    for j in range(4):
        block = conformal_pvalues_parallel(TestSetup(nulls[10 * j : 10 * j + 10], tests[j : j + 1]))
        assert pv.p[j] == block.p[0]
    one = naive_mmctest_pvalues(nulls, tests[:1])
    assert one.p[0] == conformal_pvalues_parallel(TestSetup(nulls, tests[:1])).p[0]
    with pytest.raises(ValueError, match="trim"):
        naive_mmctest_pvalues(nulls[:39], tests)


def exchangeable_pvalues(rng, n, m, method, reps, M=3):
    out = np.empty((reps, m))
    for r in range(reps):
        X = rng.normal(size=(n + m, M))
        out[r] = conformal_pvalues(TestSetup(X[:n], X[n:]), method).p
    return out


@pytest.mark.parametrize("method", ["joint_erl", "parallel_erl"])
def test_uniform_n4(rng, method):
    # 64 grid points keep ERL ties rare, so uniformity is exact up to them
    p = exchangeable_pvalues(rng, 4, 1, method, 10_000, M=64)[:, 0]
    obs = np.bincount(np.rint(p * 5).astype(int), minlength=6)[1:]
    assert stats.chisquare(obs).pvalue > 0.01


def test_ties_make_pvalues_conservative(rng):
    # with 3 grid points ties are frequent; counting them keeps P(p <= k/5) <= k/5
    p = exchangeable_pvalues(rng, 4, 1, "parallel_erl", 4000, M=3)[:, 0]
    for k in range(1, 5):
        assert (p <= k / 5 + 1e-12).mean() <= k / 5 + 3 * np.sqrt(k / 5 * (1 - k / 5) / p.size)


def test_naive_pvalues_independent(rng):
    p = exchangeable_pvalues(rng, 20, 2, "naive", 10_000, M=2)
    assert abs(np.corrcoef(p.T)[0, 1]) < 0.05


def test_scalar_joint_pmf(rng):
    n, m, reps = 3, 2, 20_000
    scores = rng.random((reps, n + m))
    idx = [tuple(np.rint(conformal_pvalues_scalar(s[:n], s[n:]).p * (n + 1)).astype(int)) for s in scores]
    cells = [(a, b) for a in range(1, n + 2) for b in range(1, n + 2)]
    obs = np.array([sum(1 for i in idx if i == c) for c in cells])
    exp = np.array([float(joint_pmf(n, m, c)) for c in cells]) * reps
    assert stats.chisquare(obs, exp).pvalue > 0.01


def test_super_uniformity(rng):
    n = 19
    p = exchangeable_pvalues(rng, n, 3, "parallel_erl", 3000)
    for k in (1, 5, 10):
        hit = (p[:, 0] <= k / (n + 1) + 1e-12).astype(float)
        assert abs(hit.mean() - k / (n + 1)) <= 3 * np.sqrt(k / (n + 1) * (1 - k / (n + 1)) / hit.size)


def test_pvalue_vector_validation_and_io(tmp_path):
    with pytest.raises(ValueError):
        PValueVector([0.0, 0.5], "scalar", 3)
    pv = PValueVector([0.25, 1.0], "parallel_erl", 3, np.array([1, 0]))
    assert pv.tie_rate == 0.5
    write_pvalues(pv, tmp_path / "p.csv")
    back = read_pvalues(tmp_path / "p.csv")
    assert np.array_equal(back.p, pv.p) and back.method == "parallel_erl" and back.n_effective == 3


def test_setup_validation():
    with pytest.raises(ValueError):
        TestSetup(np.zeros((3, 4)), np.zeros((1, 5)))
    with pytest.raises(ValueError):
        conformal_pvalues(TestSetup(np.zeros((3, 4)), np.zeros((1, 4))), "bogus")
