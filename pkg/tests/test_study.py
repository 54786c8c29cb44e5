import numpy as np
import pytest

from cmmctest.study import (
    GLOBAL_METHODS,
    NAIVE,
    ScenarioConfig,
    method_label,
    run_global_null_study,
    run_lambda_sweep,
    run_multiplicity_sweep,
    run_study,
)

pytestmark = pytest.mark.filterwarnings("ignore::UserWarning")

TINY = ScenarioConfig(n=20, m=4, m0=2, replications=3, grid_size=16, strauss_steps=2000, scores=("parallel_erl", "joint_erl"))


def test_config_validation():
    with pytest.raises(ValueError):
        ScenarioConfig(m=3, m0=4)
    with pytest.raises(ValueError):
        ScenarioConfig(replications=0)
    with pytest.raises(ValueError):
        ScenarioConfig(scores=("pointwise",))
    cfg = ScenarioConfig(scores="joint_erl", alpha_grid=0.1)
    assert cfg.scores == ("joint_erl",) and cfg.alpha_grid == (0.1,)
    assert list(ScenarioConfig().alternatives) == [0, 1, 2, 3, 4]


def test_naive_budget():
    assert ScenarioConfig(n=500, m=10).naive_budget() == (500, "")
    used, why = ScenarioConfig(n=25, m=10).naive_budget()
    assert used == 20 and why.startswith("trimmed")
    used, why = ScenarioConfig(n=5, m=10, m0=5).naive_budget()
    assert used == 0 and why.startswith("skipped")
    assert ScenarioConfig(naive=False).naive_budget()[0] == 0


def test_deterministic_and_single_rep():
    a, b = run_study(TINY), run_study(TINY)
    assert a == b
    one = run_study(TINY.replace(replications=1))
    key = ("storey_bh", method_label("parallel_erl"), 0.05)
    assert one.values[key]["fdr"][0] == a.values[key]["fdr"][0]
    assert one.estimate("fdr", *key)[1] == 0.0
    assert set(a.methods()) == {method_label("parallel_erl"), method_label("joint_erl"), NAIVE}


def test_seed_changes_results():
    a = run_study(TINY.replace(replications=4))
    b = run_study(TINY.replace(replications=4, seed=1))
    assert a != b


def test_naive_skipped_when_n_below_m():
    res = run_study(TINY.replace(n=3, replications=1))
    assert NAIVE not in res.methods()
    assert res.notes[NAIVE].startswith("skipped")


def test_rejections_monotone_in_alpha():
    res = run_study(TINY.replace(alpha_grid=(0.05, 0.1, 0.2, 0.5), procedures=("storey_bh", "bh", "hochberg")))
    for proc in ("storey_bh", "bh", "hochberg"):
        for method in res.methods(proc):
            r = [res.values[(proc, method, a)]["rejections"] for a in (0.05, 0.1, 0.2, 0.5)]
            assert all(np.all(x <= y) for x, y in zip(r, r[1:]))


def test_lambda_sweep_matches_study():
    cfg = TINY.replace(lam=0.5)
    sweep = run_lambda_sweep(cfg, [0.5, 0.3])
    assert sweep[0.5] == run_study(cfg)
    assert set(sweep) == {0.5, 0.3}


def test_multiplicity_sweep_keys():
    out = run_multiplicity_sweep(TINY.replace(replications=1), [0.1], [2, 4], [8, 12])
    assert set(out) == {(2, 8), (2, 12), (4, 8), (4, 12)}
    assert out[(4, 12)].config.m0 == 2


def test_fit_from_runs():
    res = run_study(TINY.replace(fit_from=3, replications=1))
    assert method_label("parallel_erl") in res.methods()


def test_global_m1_coincide():
    cfg = ScenarioConfig(n=19, m=1, m0=1, replications=20, grid_size=16, alpha_grid=(0.1, 0.3))
    res = run_global_null_study(cfg)
    assert set(res.methods()) == set(GLOBAL_METHODS)
    for alpha in cfg.alpha_grid:
        # with one test, Hochberg on the parallel score and the concatenated test are the same test
        get = res.values[("global", "concatenated_get", alpha)]["reject"]
        hoch = res.values[("global", "hochberg_parallel_erl", alpha)]["reject"]
        joint = res.values[("global", "hochberg_joint_erl", alpha)]["reject"]
        assert np.array_equal(get, hoch) and np.array_equal(hoch, joint)


def test_csv_layout(tmp_path):
    res = run_study(TINY)
    files = res.write_csv(tmp_path, prefix="s1_")
    names = sorted(f.name for f in files)
    assert names == ["s1_storey_bh_fdr.csv", "s1_storey_bh_fwer.csv", "s1_storey_bh_rejections.csv", "s1_storey_bh_tdr.csv"]
    lines = (tmp_path / "s1_storey_bh_tdr.csv").read_text().splitlines()
    assert lines[0] == "alpha,method,estimate,se"
    assert len(lines) == 1 + 3 * len(TINY.alpha_grid)


def test_workers_match_serial():
    assert run_study(TINY.replace(workers=2)) == run_study(TINY)
