"""Simulation-study harness: FDR, TDR and FWER of CMMCTest against naive MMCTest.

One replication simulates a shared null sample of ``n`` patterns and ``m``
test patterns, the first ``m - m0`` of which come from the alternative.
Curves are computed once per pattern. Every p-value method
and every (procedure, alpha) pair is then evaluated on the same curves.
Replication ``r`` draws all of its randomness from ``RngStream(seed, r)``,
so a study is a pure function of its configuration.
"""

from __future__ import annotations

import dataclasses
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .conformal import TestSetup, conformal_pvalues, naive_mmctest_pvalues
from .fitting import build_mixture_null
from .generators import (
    DEFAULT_LGCP_GRID,
    LgcpParams,
    Mixture,
    PoissonParams,
    StraussParams,
    parse_model,
    simulate_null,
)
from .multiplicity import (
    apply_procedure,
    concatenated_get_pvalue,
    error_metrics,
    global_null_fisher,
    global_null_hochberg,
    snap_lambda,
)
from .patterns import UNIT_SQUARE, RngStream
from .summaries import DistanceGrid, curve_matrix

SCORES = ("parallel_erl", "joint_erl")
NAIVE = "mmctest"
METRICS = ("fdr", "tdr", "fwer")
GLOBAL_METHODS = ("concatenated_get", "hochberg_parallel_erl", "hochberg_joint_erl", "fisher_naive")

# substream ids inside one replication
_FIT, _NULLS, _TESTS, _PERM = 0, 1, 2, 3


def method_label(score: str) -> str:
    return f"cmmctest_{score}"


@dataclass(frozen=True)
class ScenarioConfig:
    null_model: object = "poisson:200"
    alt_model: object = "strauss:250,0.6,0.03"
    n: int = 500
    m: int = 10
    m0: int = 5
    scores: tuple = ("parallel_erl",)
    naive: bool = True
    statistic: str = "centered_L"
    procedures: tuple = ("storey_bh",)
    alpha_grid: tuple = (0.05, 0.1, 0.2)
    lam: float = 0.5
    replications: int = 500
    seed: int = 0
    fit_from: int | None = None
    strauss_steps: int = 20_000
    lgcp_grid: int = DEFAULT_LGCP_GRID
    grid_size: int = 64
    workers: int = 1

    def __post_init__(self):
        for name in ("null_model", "alt_model"):
            v = getattr(self, name)
            if isinstance(v, str):
                object.__setattr__(self, name, parse_model(v))
        for name in ("scores", "procedures", "alpha_grid"):
            v = getattr(self, name)
            object.__setattr__(self, name, (v,) if isinstance(v, (str, float, int)) else tuple(v))
        if not 0 <= self.m0 <= self.m:
            raise ValueError("need 0 <= m0 <= m")
        if self.m < 1 or self.n < 1:
            raise ValueError("need n >= 1 and m >= 1")
        if self.replications < 1:
            raise ValueError("need at least one replication")
        if any(s not in SCORES for s in self.scores):
            raise ValueError(f"scores must be drawn from {SCORES}")
        if self.fit_from is not None and self.fit_from < 1:
            raise ValueError("fit_from must be a positive count")

    def replace(self, **kw) -> "ScenarioConfig":
        return dataclasses.replace(self, **kw)

    @property
    def grid(self) -> DistanceGrid:
        return DistanceGrid.default(UNIT_SQUARE, size=self.grid_size)

    @property
    def alternatives(self) -> range:
        return range(self.m - self.m0)

    def naive_budget(self) -> tuple[int, str]:
        """Null curves usable by the naive arm, with a reason when it is cut or skipped."""
        if not self.naive:
            return 0, "disabled"
        if self.n < self.m:
            return 0, f"skipped: n={self.n} < m={self.m}"
        if self.n % self.m:
            used = self.n - self.n % self.m
            return used, f"trimmed: {self.n % self.m} of {self.n} null curves unused so that m | n"
        return self.n, ""


def _family(model) -> str:
    while isinstance(model, Mixture):
        model = model.components[0]
    return {PoissonParams: "poisson", StraussParams: "strauss", LgcpParams: "lgcp"}[type(model)]


def _simulate(model, count, stream, cfg):
    return [
        simulate_null(model, rng=stream, strauss_steps=cfg.strauss_steps, lgcp_grid=cfg.lgcp_grid)
        for _ in range(count)
    ]


def simulate_curves(cfg: ScenarioConfig, rng: RngStream):
    """Null curves ``(n, M)`` and test curves ``(m, M)`` for one replication."""
    grid = cfg.grid
    null_model = cfg.null_model
    if cfg.fit_from:
        observed = _simulate(cfg.null_model, cfg.fit_from, rng.substream(_FIT), cfg)
        null_model, _ = build_mixture_null(observed, _family(cfg.null_model), grid=grid)
    nulls = _simulate(null_model, cfg.n, rng.substream(_NULLS), cfg)
    ts = rng.substream(_TESTS)
    tests = [
        simulate_null(
            cfg.alt_model if j in cfg.alternatives else cfg.null_model,
            rng=ts.substream(j),
            strauss_steps=cfg.strauss_steps,
            lgcp_grid=cfg.lgcp_grid,
        )
        for j in range(cfg.m)
    ]
    return curve_matrix(nulls, grid, cfg.statistic), curve_matrix(tests, grid, cfg.statistic)


def pvalue_sets(cfg: ScenarioConfig, null_curves, test_curves) -> dict:
    """p-values per method label; the naive arm uses the first ``naive_budget`` nulls."""
    setup = TestSetup(null_curves, test_curves)
    out = {method_label(s): conformal_pvalues(setup, s) for s in cfg.scores}
    used, _ = cfg.naive_budget()
    if used:
        out[NAIVE] = naive_mmctest_pvalues(null_curves[:used], test_curves)
    return out


def evaluate(cfg: ScenarioConfig, pvals: dict, lam: float | None = None) -> dict:
    """``{(procedure, method, alpha): ErrorMetrics}`` for one replication."""
    lam = cfg.lam if lam is None else lam
    truth = cfg.alternatives
    out = {}
    for method, pv in pvals.items():
        lam_eff = snap_lambda(lam, pv.n_effective)
        for proc in cfg.procedures:
            for alpha in cfg.alpha_grid:
                rej = apply_procedure(proc, pv, alpha, lam_eff)
                out[(proc, method, alpha)] = error_metrics(rej, truth, cfg.m)
    return out


def run_replication(cfg: ScenarioConfig, rng: RngStream) -> dict:
    null_curves, test_curves = simulate_curves(cfg, rng)
    return evaluate(cfg, pvalue_sets(cfg, null_curves, test_curves))


@dataclass(eq=False)
class StudyResult:
    """Per-replication outcomes, keyed by ``(procedure, method, alpha)``.

    ``values[key][metric]`` is an array with one entry per replication.
    Estimates are means; standard errors are ``sqrt(var / reps)``.
    """

    config: ScenarioConfig
    values: dict
    notes: dict = field(default_factory=dict)

    @property
    def replications(self) -> int:
        return self.config.replications

    def keys(self):
        return sorted(self.values, key=lambda k: (k[0], k[1], k[2]))

    def methods(self, procedure: str | None = None) -> list:
        return sorted({k[1] for k in self.values if procedure is None or k[0] == procedure})

    def estimate(self, metric: str, procedure: str, method: str, alpha: float) -> tuple[float, float]:
        x = np.asarray(self.values[(procedure, method, alpha)][metric], dtype=float)
        return float(x.mean()), float(np.sqrt(x.var() / x.size))

    def rows(self, metric: str, procedure: str) -> list:
        """``(alpha, method, estimate, se)`` rows for one procedure and metric."""
        out = []
        for proc, method, alpha in self.keys():
            if proc == procedure and metric in self.values[(proc, method, alpha)]:
                out.append((alpha, method, *self.estimate(metric, proc, method, alpha)))
        return sorted(out)

    def __eq__(self, other):
        if not isinstance(other, StudyResult) or set(self.values) != set(other.values):
            return False
        return all(
            set(self.values[k]) == set(other.values[k])
            and all(np.array_equal(self.values[k][mt], other.values[k][mt]) for mt in self.values[k])
            for k in self.values
        )

    def write_csv(self, directory, prefix: str = "") -> list:
        """One file per (procedure, metric), columns ``alpha,method,estimate,se``."""
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        written = []
        procs = sorted({k[0] for k in self.values})
        metrics = sorted({mt for v in self.values.values() for mt in v})
        for proc in procs:
            for metric in metrics:
                rows = self.rows(metric, proc)
                if not rows:
                    continue
                path = directory / f"{prefix}{proc}_{metric}.csv"
                lines = ["alpha,method,estimate,se"]
                lines.extend(f"{a:g},{mth},{e:.17g},{s:.17g}" for a, mth, e, s in rows)
                path.write_text("\n".join(lines) + "\n")
                written.append(path)
        return written


def _collect(cfg: ScenarioConfig, per_rep: list, notes: dict) -> StudyResult:
    values = {}
    for rep in per_rep:
        for key, em in rep.items():
            slot = values.setdefault(key, {"fdr": [], "tdr": [], "fwer": [], "rejections": []})
            slot["fdr"].append(em.fdp)
            slot["tdr"].append(em.tdp)
            slot["fwer"].append(float(em.any_false))
            slot["rejections"].append(em.R)
    for slot in values.values():
        for mt in slot:
            slot[mt] = np.asarray(slot[mt], dtype=float)
    return StudyResult(cfg, values, notes)


def _study_notes(cfg: ScenarioConfig) -> dict:
    used, reason = cfg.naive_budget()
    return {NAIVE: reason} if reason else {}


def _map(fn, cfg: ScenarioConfig, reps):
    if cfg.workers > 1:
        with ProcessPoolExecutor(cfg.workers) as ex:
            return list(ex.map(fn, [cfg] * len(reps), reps))
    return [fn(cfg, r) for r in reps]


def _study_task(cfg, r):
    return run_replication(cfg, RngStream(cfg.seed, r))


def run_study(cfg: ScenarioConfig) -> StudyResult:
    reps = _map(_study_task, cfg, list(range(cfg.replications)))
    return _collect(cfg, reps, _study_notes(cfg))


def _lambda_task(cfg_lams, r):
    cfg, lams = cfg_lams
    null_curves, test_curves = simulate_curves(cfg, RngStream(cfg.seed, r))
    pv = pvalue_sets(cfg, null_curves, test_curves)
    return [evaluate(cfg, pv, lam) for lam in lams]


def run_lambda_sweep(cfg: ScenarioConfig, lambdas) -> dict:
    """``{lambda: StudyResult}``; every lambda is evaluated on the same simulated curves.

    Each lambda is snapped to the nearest ``K/(n+1)`` of the p-values it is applied to.
    """
    lambdas = [float(x) for x in lambdas]
    reps = range(cfg.replications)
    if cfg.workers > 1:
        with ProcessPoolExecutor(cfg.workers) as ex:
            per = list(ex.map(_lambda_task, [(cfg, lambdas)] * len(reps), reps))
    else:
        per = [_lambda_task((cfg, lambdas), r) for r in reps]
    notes = _study_notes(cfg)
    return {
        lam: _collect(cfg.replace(lam=lam), [p[i] for p in per], dict(notes, lam_snapped=snap_lambda(lam, cfg.n)))
        for i, lam in enumerate(lambdas)
    }


def run_multiplicity_sweep(cfg: ScenarioConfig, alphas, ms, ns) -> dict:
    """``{(m, n): StudyResult}`` with ``m0 = m // 2`` throughout."""
    out = {}
    for m in ms:
        for n in ns:
            sub = cfg.replace(m=int(m), m0=int(m) // 2, n=int(n), alpha_grid=tuple(alphas))
            out[(int(m), int(n))] = run_study(sub)
    return out


def _global_task(cfg, r):
    rng = RngStream(cfg.seed, r)
    null_curves, test_curves = simulate_curves(cfg, rng)
    gcfg = cfg.replace(scores=SCORES)
    pv = pvalue_sets(gcfg, null_curves, test_curves)
    used, _ = cfg.naive_budget()
    out = {}
    if used:
        p_get = concatenated_get_pvalue(TestSetup(null_curves[:used], test_curves), rng.substream(_PERM))
    for alpha in cfg.alpha_grid:
        if used:
            out[("global", "concatenated_get", alpha)] = float(p_get <= alpha * (1 + 1e-12))
            out[("global", "fisher_naive", alpha)] = float(global_null_fisher(pv[NAIVE], alpha))
        for s in SCORES:
            out[("global", f"hochberg_{s}", alpha)] = float(global_null_hochberg(pv[method_label(s)], alpha))
    return out


def run_global_null_study(cfg: ScenarioConfig) -> StudyResult:
    """Rejection rate of each global-null test; type-I error when ``m0 == m``, power otherwise."""
    per = _map(_global_task, cfg, list(range(cfg.replications)))
    values = {}
    for rep in per:
        for key, v in rep.items():
            values.setdefault(key, {"reject": []})["reject"].append(v)
    for slot in values.values():
        slot["reject"] = np.asarray(slot["reject"], dtype=float)
    return StudyResult(cfg, values, _study_notes(cfg))
