"""Iterative phase-I filtering and phase-II classification.

Each stage estimates dependence, fits the marginals at the retained
means, fits the copula, solves the UCL and flags retained rows whose
T^2 exceeds it. Flagged rows are removed and the procedure repeats until
a stage flags nothing.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from typing import List, Optional, Tuple, Union

import numpy as np

from .copula import build_targets, fit_copula
from .control import ControlDesign, HotellingParams, estimate_params, find_ucl, t2
from .errors import MCEError, StageError, TooFewSamples
from .joint import JointModel
from .marginal import Support, auto_support, fit_marginal
from .numerics import SolverConfig, gauss_legendre
from .ranks import BivariateSample, DependenceMeasures, estimate_dependence

__all__ = ["Phase1Config", "StageRecord", "Phase1Result", "Phase2Result", "run_phase1", "classify_phase2",
           "DEP_POLICIES"]

log = logging.getLogger(__name__)

DEP_POLICIES = ("per-stage", "fixed-phase1", "fixed-all")
SupportSpec = Union[str, Support]


@dataclass(frozen=True)
class Phase1Config:
    """Pipeline options.

    Attributes
    ----------
    support_x, support_y : "auto" or Support
        ``"auto"`` applies :func:`auto_support` to the phase-I rows.
    dep_policy : {"per-stage", "fixed-phase1", "fixed-all"}
        Re-estimate dependence at every stage, keep the stage-1 estimate,
        or estimate once from ``reference`` (all available rows).
    ucl_params : {"fitted", "sample", "mssd"}
        Parameters plugged into the coverage integral when solving the UCL.
    chart_params : {"fitted", "sample", "mssd"}
        Parameters used to score the rows. ``"mssd"`` is the
        successive-difference covariance of the retained rows.
    phase2_scale : float
        Multiplier applied to phase-II T^2 values before comparison with
        the UCL (1 for the plain chart).
    on_infeasible : {"raise", "shrink"}
        Passed to :func:`fit_copula`.
    """

    alpha: float = 0.05
    r: int = 5
    order: int = 64
    solver: SolverConfig = SolverConfig()
    support_x: SupportSpec = "auto"
    support_y: SupportSpec = "auto"
    dep_policy: str = "per-stage"
    ucl_params: str = "fitted"
    chart_params: str = "fitted"
    phase2_scale: float = 1.0
    on_infeasible: str = "raise"
    min_margin: float = 5e-2
    min_n: int = 10
    ucl_order: int = 32

    def __post_init__(self):
        if self.dep_policy not in DEP_POLICIES:
            raise ValueError(f"dep_policy must be one of {DEP_POLICIES}")
        if not 0 < self.alpha < 1:
            raise ValueError("alpha must lie in (0, 1)")
        if self.min_n < 3:
            raise ValueError("min_n must be >= 3")


@dataclass
class StageRecord:
    stage_index: int
    retained_indices: np.ndarray
    dependence: DependenceMeasures
    model: JointModel
    design: ControlDesign
    chart_params: HotellingParams
    flagged_indices: np.ndarray
    t2_values: np.ndarray  # aligned to the input rows; nan for rows removed earlier


@dataclass
class Phase1Result:
    stages: List[StageRecord]
    final_design: ControlDesign
    final_chart_params: HotellingParams
    config: Phase1Config
    stopped_early: bool = False
    diagnostic: str = ""

    @property
    def final_stage(self) -> StageRecord:
        return self.stages[-1]


@dataclass
class Phase2Result:
    t2_values: np.ndarray
    flags: np.ndarray
    ucl: float


def _resolve_support(spec: SupportSpec, values: np.ndarray) -> Support:
    if isinstance(spec, Support):
        return spec
    if spec == "auto":
        return auto_support(values)
    return Support.parse(spec)


def _fit_stage(sub: BivariateSample, dep: DependenceMeasures, sx: Support, sy: Support,
               cfg: Phase1Config) -> JointModel:
    rule = gauss_legendre(cfg.order)
    mx = fit_marginal(float(sub.x.mean()), sx, cfg.solver)
    my = fit_marginal(float(sub.y.mean()), sy, cfg.solver)
    cop = fit_copula(build_targets(dep, cfg.r), rule, cfg.solver, cfg.on_infeasible, cfg.min_margin)
    return JointModel(mx, my, cop)


def _params(source: str, model: JointModel, sub: BivariateSample) -> HotellingParams:
    return estimate_params(source, model=model, sample=sub)


def run_phase1(sample: BivariateSample, cfg: Phase1Config = Phase1Config(),
               reference: Optional[BivariateSample] = None) -> Phase1Result:
    """Iterative phase-I filtering of ``sample``.

    Parameters
    ----------
    sample : BivariateSample
        Phase-I rows in their recorded order (the order matters for the
        ``"mssd"`` covariance).
    cfg : Phase1Config
    reference : BivariateSample, optional
        Rows used for the dependence estimate under ``dep_policy="fixed-all"``.

    Raises
    ------
    TooFewSamples
        The initial sample is below ``cfg.min_n``.
    StageError
        The first stage fails; later failures stop the loop and return the
        last completed stage with ``stopped_early`` set.
    """
    if sample.n < cfg.min_n:
        raise TooFewSamples(f"{sample.n} rows given, at least {cfg.min_n} required")
    sx = _resolve_support(cfg.support_x, sample.x)
    sy = _resolve_support(cfg.support_y, sample.y)
    fixed_dep: Optional[DependenceMeasures] = None
    if cfg.dep_policy == "fixed-all":
        fixed_dep = estimate_dependence(reference if reference is not None else sample)

    retained = np.arange(sample.n)
    stages: List[StageRecord] = []
    diagnostic = ""
    stopped = False
    while True:
        k = len(stages) + 1
        sub = sample.subset(retained)
        try:
            if sub.n < cfg.min_n:
                raise TooFewSamples(f"{sub.n} rows retained, at least {cfg.min_n} required")
            if fixed_dep is not None:
                dep = fixed_dep
            elif cfg.dep_policy == "fixed-phase1" and stages:
                dep = stages[0].dependence
            else:
                dep = estimate_dependence(sub)
            model = _fit_stage(sub, dep, sx, sy, cfg)
            up = _params(cfg.ucl_params, model, sub)
            design = find_ucl(model, up, cfg.alpha, gauss_legendre(cfg.ucl_order))
            cp = up if cfg.chart_params == cfg.ucl_params else _params(cfg.chart_params, model, sub)
        except MCEError as exc:
            if not stages:
                raise StageError(k, exc) from exc
            stopped = True
            diagnostic = str(StageError(k, exc))
            log.warning("phase-I stopped: %s", diagnostic)
            break
        vals = np.full(sample.n, np.nan)
        vals[retained] = t2(cp, sub.x, sub.y)
        flagged = retained[vals[retained] > design.ucl]
        stages.append(StageRecord(k, retained.copy(), dep, model, design, cp, flagged, vals))
        log.info("stage %d: n=%d ucl=%.6g flagged=%s", k, sub.n, design.ucl, (flagged + 1).tolist())
        if flagged.size == 0:
            break
        retained = np.setdiff1d(retained, flagged)
    last = stages[-1]
    return Phase1Result(stages, last.design, last.chart_params, cfg, stopped, diagnostic)


def classify_phase2(result: Phase1Result, new_rows: BivariateSample) -> Phase2Result:
    """Score new rows against the final phase-I design."""
    vals = result.config.phase2_scale * t2(result.final_chart_params, new_rows.x, new_rows.y)
    vals = np.atleast_1d(np.asarray(vals, dtype=float))
    return Phase2Result(vals, vals > result.final_design.ucl, result.final_design.ucl)
