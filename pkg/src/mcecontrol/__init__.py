"""Maximum copula entropy models for bivariate T^2 control charts.

Fit a joint density from rank-dependence constraints and maximum-entropy
marginals, derive Hotelling T^2 control limits from it and measure chart
performance by Monte Carlo average run length.
"""
from .arl import ARLReport, ShiftSpec, arl_grid, beta_from_arl, shifted_model, simulate_arl
from .control import (
    ControlDesign,
    HotellingParams,
    coverage_prob,
    estimate_params,
    find_ucl,
    joint_moments,
    t2,
)
from .copula import (
    ConstraintTargets,
    CopulaDensity,
    build_targets,
    copula_moments,
    copula_pdf,
    feasibility_margin,
    fit_copula,
    independence_copula,
    shrink_to_feasible,
)
from .errors import *  # noqa: F401,F403
from .io import fixture_path, load_csv
from .joint import JointModel, RandomStream, independent_baseline, joint_pdf, sample_copula, sample_joint
from .marginal import (
    MaxEntMarginal,
    Support,
    auto_support,
    fit_marginal,
    marginal_cdf,
    marginal_moments,
    marginal_pdf,
    marginal_ppf,
)
from .numerics import QuadratureRule, SolverConfig, bisect, gauss_legendre, integrate2d, newton_minimize
from .phase1 import Phase1Config, Phase1Result, StageRecord, classify_phase2, run_phase1
from .presets import DEPENDENCE_GROUPS, group_measures
from .ranks import BivariateSample, DependenceMeasures, RankPair, compute_ranks, estimate_dependence

__version__ = "0.1.0"
