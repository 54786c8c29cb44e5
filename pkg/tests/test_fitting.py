import math

import numpy as np
import pytest

from cmmctest.fitting import (
    FitResult,
    build_mixture_null,
    fit_family,
    fit_lgcp,
    fit_poisson,
    fit_strauss,
    lgcp_k_model,
    write_fit_report,
)
from cmmctest.generators import LgcpParams, Mixture, PoissonParams, StraussParams, mean_intensity, simulate_null
from cmmctest.patterns import PointPattern, Window
from cmmctest.summaries import DistanceGrid

UNIT = Window(0.0, 1.0, 0.0, 1.0)
GRID = DistanceGrid.default(size=32)
R_GRID = [0.02, 0.025, 0.03, 0.035, 0.04]


def test_fit_poisson_examples(rng):
    assert fit_poisson(PointPattern(rng.random((200, 2)), UNIT)).params.intensity == 200
    empty = fit_poisson(PointPattern(np.empty((0, 2)), UNIT))
    assert empty.params.intensity == 0 and empty.degenerate
    half = Window(0.0, 0.5, 0.0, 0.5)
    assert fit_poisson(PointPattern(0.5 * rng.random((50, 2)), half)).params.intensity == 200


def test_fit_poisson_invariances(rng):
    pts = rng.random((37, 2))
    a = fit_poisson(PointPattern(pts, UNIT)).params.intensity
    assert fit_poisson(PointPattern(pts[::-1], UNIT)).params.intensity == a
    shifted = PointPattern(pts + 3.0, Window(3.0, 4.0, 3.0, 4.0))
    assert fit_poisson(shifted).params.intensity == a


def test_strauss_on_poisson(stream):
    g = [fit_strauss(simulate_null(PoissonParams(200), rng=stream.substream(i)), R_GRID).params.gamma for i in range(200)]
    assert 0.9 <= np.mean(g) <= 1.0
    assert all(0 <= x <= 1 for x in g)


def test_strauss_on_strauss(stream):
    model = StraussParams(250, 0.6, 0.03)
    g = [
        fit_strauss(simulate_null(model, rng=stream.substream(i), strauss_steps=20_000), R_GRID).params.gamma
        for i in range(200)
    ]
    assert 0.4 <= np.mean(g) <= 0.8


def test_strauss_hard_core(stream):
    model = StraussParams(150, 0.0, 0.03)
    for i in range(10):
        p = simulate_null(model, rng=stream.substream(i), strauss_steps=20_000)
        fit = fit_strauss(p, [0.03])
        assert fit.params.gamma < 0.05


def test_strauss_returns_best_candidate(stream):
    p = simulate_null(StraussParams(250, 0.6, 0.03), rng=stream.substream(0), strauss_steps=20_000)
    fit = fit_strauss(p, R_GRID)
    assert len(fit.candidates) == len(R_GRID)
    assert fit.objective == max(ll for _, ll in fit.candidates)
    assert fit.params.radius in R_GRID


def test_strauss_errors():
    with pytest.raises(ValueError):
        fit_strauss(PointPattern(np.array([[0.5, 0.5]]), UNIT), R_GRID)
    with pytest.raises(ValueError):
        fit_strauss(PointPattern(np.array([[0.5, 0.5], [0.1, 0.1]]), UNIT), [0.0])


def test_lgcp_k_model():
    r = np.array([0.01, 0.05, 0.1])
    assert np.allclose(lgcp_k_model(r, 0.0, 0.05), np.pi * r**2, rtol=1e-4)
    # closed form of the s * exp(-s/c) term for small sigma2: K ~ pi r^2 + sigma2 * 2 pi c (c - (r + c) e^{-r/c})
    s2, c = 1e-6, 0.05
    approx = np.pi * r**2 + s2 * 2 * np.pi * c * (c - (r + c) * np.exp(-r / c))
    assert np.allclose(lgcp_k_model(r, s2, c), approx, rtol=1e-8)


def test_lgcp_on_lgcp(stream):
    model = LgcpParams(5.0, 0.6, 0.05)
    fits = [fit_lgcp(simulate_null(model, rng=stream.substream(i)), GRID) for i in range(200)]
    assert 0.3 <= np.median([f.params.sigma2 for f in fits]) <= 1.0


def test_lgcp_on_poisson(stream):
    # sigma2 and scale are weakly identified near Poisson, so single fits have a heavy tail
    fits = [fit_lgcp(simulate_null(PoissonParams(200), rng=stream.substream(i)), GRID) for i in range(60)]
    assert np.median([f.params.sigma2 for f in fits]) < 0.2
    assert np.median([abs(f.params.mu - math.log(200)) for f in fits]) < 0.1


def test_lgcp_intensity_identity(stream):
    p = simulate_null(LgcpParams(5.0, 0.6, 0.05), rng=stream.substream(3))
    f = fit_lgcp(p, GRID).params
    assert math.exp(f.mu + f.sigma2 / 2) * p.window.area() == pytest.approx(len(p), rel=1e-12)


def test_mixture_examples(stream):
    p = simulate_null(PoissonParams(200), rng=stream.substream(0))
    mix, fits = build_mixture_null([p], "poisson")
    assert mix.components == (fits[0].params,)
    pats = [simulate_null(PoissonParams(200), rng=stream.substream(i)) for i in range(10)]
    mix, fits = build_mixture_null(pats, "poisson")
    assert isinstance(mix, Mixture) and len(mix.components) == 10
    assert mean_intensity(mix) == pytest.approx(np.mean([len(q) for q in pats]))
    with pytest.raises(ValueError):
        build_mixture_null([], "poisson")
    with pytest.raises(ValueError):
        fit_family(p, "thomas")


def test_fit_report(tmp_path, stream):
    pats = [simulate_null(PoissonParams(100), rng=stream.substream(i)) for i in range(3)]
    _, fits = build_mixture_null(pats, "strauss", R_grid=R_GRID)
    write_fit_report(fits, tmp_path / "fits.csv")
    lines = (tmp_path / "fits.csv").read_text().splitlines()
    assert lines[0] == "pattern_index,model,objective,degenerate"
    assert len(lines) == 4 and lines[1].startswith("0,strauss:")
    assert isinstance(fits[0], FitResult)
