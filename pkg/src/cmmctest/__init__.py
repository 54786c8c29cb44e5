"""Conformal multiple Monte Carlo testing for replicated spatial point patterns."""

from .conformal import (
    PValueVector,
    TestSetup,
    conformal_pvalues,
    conformal_pvalues_joint,
    conformal_pvalues_parallel,
    conformal_pvalues_scalar,
    naive_mmctest_pvalues,
)
from .envelopes import critical_rank, erl_envelope, rank_envelope, single_test_report, storey_bh_envelopes
from .generators import LgcpParams, Mixture, PoissonParams, StraussParams, parse_model, simulate_null
from .multiplicity import (
    apply_procedure,
    bh_procedure,
    hochberg_procedure,
    hommel_procedure,
    sidak,
    storey_bh,
)
from .patterns import UNIT_SQUARE, PointPattern, RngStream, Window, read_pattern, write_pattern
from .study import ScenarioConfig, run_study
from .summaries import DistanceGrid, centered_l_function, j_function, k_function

__version__ = "0.1.0"
