import subprocess
import sys
from fractions import Fraction

import pytest

from cmmctest.cli import _config_from, build_parser, main, read_config

pytestmark = pytest.mark.filterwarnings("ignore::UserWarning")


def run(*argv):
    assert main([str(a) for a in argv]) == 0


@pytest.fixture
def dirs(tmp_path):
    run("simulate", "--model", "poisson:100", "--count", 15, "--seed", 1, "--outdir", tmp_path / "nulls")
    run("simulate", "--model", "poisson:100", "--count", 2, "--seed", 1, "--stream", 1, "--outdir", tmp_path / "tests")
    run("simulate", "--model", "strauss:120,0.2,0.05", "--count", 1, "--seed", 2, "--strauss-steps", 5000,
        "--outdir", tmp_path / "alts")
    return tmp_path


def test_simulate_and_curves(dirs):
    files = sorted((dirs / "nulls").glob("*.txt"))
    assert len(files) == 15 and files[0].name == "pattern_00000.txt"
    run("curves", *files[:2], "--statistic", "J", "--grid-size", 8, "--outdir", dirs / "curves")
    assert len(list((dirs / "curves").glob("*_J.csv"))) == 2


def test_test_and_envelope(dirs):
    common = ["--null-dir", dirs / "nulls", "--test-dir", dirs / "tests", "--grid-size", 16, "--alpha", 0.2]
    run("test", *common, "--outdir", dirs / "out")
    assert (dirs / "out" / "pvalues.csv").exists()
    assert len((dirs / "out" / "rejections.csv").read_text().splitlines()) == 3
    run("envelope", *common, "--pool", "parallel", "--outdir", dirs / "env")
    assert len(list((dirs / "env").glob("envelope_*.csv"))) == 2
    assert (dirs / "env" / "manifest.csv").read_text().startswith("test_index,p_value")


def test_missing_patterns(tmp_path):
    (tmp_path / "empty").mkdir()
    with pytest.raises(SystemExit):
        run("test", "--null-dir", tmp_path / "empty", "--test-dir", tmp_path / "empty", "--outdir", tmp_path)


def test_fwer_exact(tmp_path):
    out = tmp_path / "f.csv"
    run("fwer-exact", "--ns", "10:30:10", "--m", 2, "--m0", 2, "--alpha", "0.05,0.1", "--procedures", "hochberg",
        "--rational", "--out", out)
    lines = out.read_text().splitlines()
    assert lines[0] == "n,m,m0,procedure,alpha,fwer_exact" and len(lines) == 7
    assert all(0 <= Fraction(l.split(",")[-1]) <= Fraction(1, 10) for l in lines[1:])


def test_config_file_and_override(tmp_path):
    cfg = tmp_path / "s.cfg"
    cfg.write_text("# tiny\nn = 20\nm = 4\nm0 = 2  # two nulls\nscores = parallel_erl, joint_erl\nalpha_grid = 0.1\n")
    assert read_config(cfg)["scores"] == ("parallel_erl", "joint_erl")
    args = build_parser().parse_args(["study", "--config", str(cfg), "--n", "30", "--outdir", str(tmp_path)])
    c = _config_from(args)
    assert (c.n, c.m, c.alpha_grid) == (30, 4, (0.1,))
    bad = tmp_path / "bad.cfg"
    bad.write_text("replicas = 3\n")
    with pytest.raises(ValueError):
        read_config(bad)


def test_study_command(tmp_path):
    cfg = tmp_path / "s.cfg"
    cfg.write_text("n = 10\nm = 2\nm0 = 1\nreplications = 2\ngrid_size = 8\nstrauss_steps = 1000\n")
    run("study", "--config", cfg, "--outdir", tmp_path / "power")
    assert (tmp_path / "power" / "storey_bh_fdr.csv").exists()
    run("study", "--config", cfg, "--kind", "global", "--m0", 2, "--outdir", tmp_path / "global")
    assert (tmp_path / "global" / "global_reject.csv").exists()
    run("study", "--config", cfg, "--kind", "lambda", "--lambdas", "0.3,0.5", "--outdir", tmp_path / "lam")
    assert (tmp_path / "lam" / "lambda0.3_storey_bh_tdr.csv").exists()


def test_entry_point_help():
    r = subprocess.run([sys.executable, "-m", "cmmctest.cli", "--help"], capture_output=True, text=True)
    assert r.returncode == 0 and "fwer-exact" in r.stdout
