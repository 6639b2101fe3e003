"""Run configuration: defaults < config file < environment < flags."""
from __future__ import annotations

import dataclasses
import os
from dataclasses import dataclass, fields
from pathlib import Path
from typing import Dict, Mapping, Optional

from .errors import ConfigError
from .io import fmt, read_kv
from .marginal import Support
from .numerics import SolverConfig
from .phase1 import DEP_POLICIES, Phase1Config
from .control import PARAM_SOURCES

__all__ = ["RunConfig", "ENV_PREFIX", "load_config"]

ENV_PREFIX = "MCEC_"


@dataclass(frozen=True)
class RunConfig:
    alpha: float = 0.05
    r: int = 5
    quadrature_order: int = 64
    ucl_order: int = 32
    max_iterations: int = 200
    residual_tolerance: float = 1e-8
    damping_floor: float = 1e-6
    support_x: str = "auto"
    support_y: str = "auto"
    dep_policy: str = "per-stage"
    ucl_params: str = "fitted"
    chart_params: str = "fitted"
    phase2_scale: float = 1.0
    on_infeasible: str = "raise"
    min_margin: float = 0.05
    min_n: int = 10
    reps: int = 1000
    cap: int = 100000
    seed: int = 20240601
    workers: int = 1
    out: str = "out"
    data: str = ""
    x_column: str = ""
    y_column: str = ""
    rows: str = "all"
    phase2_rows: str = ""
    reference_rows: str = "all"
    group: int = 0
    rho: float = 0.0
    nu1: float = 0.0
    nu2: float = 0.0
    eta: float = 7.0 / 15.0
    mu_x: float = 1.0
    mu_y: float = 1.0
    deltas_x: str = "0,0.1,0.5,1"
    deltas_y: str = "0,0.1,0.5,1"

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        def bad(msg):
            raise ConfigError(msg)

        if not 0 < self.alpha < 1:
            bad("alpha must lie in (0, 1)")
        if not 1 <= self.r <= 8:
            bad("r must lie in 1..8")
        if self.quadrature_order < 4 or self.ucl_order < 4:
            bad("quadrature orders must be >= 4")
        if self.max_iterations < 1:
            bad("max_iterations must be >= 1")
        if self.residual_tolerance <= 0:
            bad("residual_tolerance must be > 0")
        if not 0 < self.damping_floor <= 1:
            bad("damping_floor must lie in (0, 1]")
        for name in ("support_x", "support_y"):
            v = getattr(self, name)
            if v != "auto":
                try:
                    Support.parse(v)
                except Exception:
                    bad(f"{name} must be 'auto' or 'lo,hi' (got {v!r})")
        if self.dep_policy not in DEP_POLICIES:
            bad(f"dep_policy must be one of {DEP_POLICIES}")
        for name in ("ucl_params", "chart_params"):
            if getattr(self, name) not in PARAM_SOURCES:
                bad(f"{name} must be one of {PARAM_SOURCES}")
        if self.on_infeasible not in ("raise", "shrink"):
            bad("on_infeasible must be 'raise' or 'shrink'")
        if self.phase2_scale <= 0:
            bad("phase2_scale must be > 0")
        if not 0 < self.min_margin < 1:
            bad("min_margin must lie in (0, 1)")
        if self.min_n < 3:
            bad("min_n must be >= 3")
        if self.reps < 1 or self.cap < 1 or self.workers < 1:
            bad("reps, cap and workers must be >= 1")
        if not 0 <= self.group <= 5:
            bad("group must be 0 (use rho/nu/eta or data) or 1..5")

    # --- conversions -----------------------------------------------------
    @classmethod
    def from_strings(cls, values: Mapping[str, str], base: Optional["RunConfig"] = None) -> "RunConfig":
        base = base or cls()
        known = {f.name: f for f in fields(cls)}
        upd = {}
        for k, raw in values.items():
            if k not in known:
                raise ConfigError(f"unknown config key {k!r}")
            typ = type(getattr(base, k))
            try:
                if typ is int:
                    upd[k] = int(float(raw)) if str(raw).strip().lower() not in ("",) else 0
                elif typ is float:
                    upd[k] = float(raw)
                else:
                    upd[k] = str(raw)
            except ValueError as exc:
                raise ConfigError(f"bad value for {k}: {raw!r}") from exc
        return dataclasses.replace(base, **upd)

    def to_strings(self) -> Dict[str, str]:
        # repr keeps floats exact so the written file reproduces the run
        return {f.name: repr(v) if isinstance(v, float) else fmt(v)
                for f in fields(self) for v in [getattr(self, f.name)]}

    def write(self, path) -> None:
        Path(path).write_text("".join(f"{k}={v}\n" for k, v in self.to_strings().items()))

    def solver(self) -> SolverConfig:
        return SolverConfig(self.max_iterations, self.residual_tolerance, self.damping_floor)

    def support(self, axis: str):
        v = getattr(self, f"support_{axis}")
        return v if v == "auto" else Support.parse(v)

    def phase1(self) -> Phase1Config:
        return Phase1Config(
            alpha=self.alpha, r=self.r, order=self.quadrature_order, solver=self.solver(),
            support_x=self.support("x"), support_y=self.support("y"), dep_policy=self.dep_policy,
            ucl_params=self.ucl_params, chart_params=self.chart_params, phase2_scale=self.phase2_scale,
            on_infeasible=self.on_infeasible, min_margin=self.min_margin, min_n=self.min_n,
            ucl_order=self.ucl_order,
        )


def env_overrides(environ: Optional[Mapping[str, str]] = None) -> Dict[str, str]:
    environ = os.environ if environ is None else environ
    names = {f.name for f in fields(RunConfig)}
    out = {}
    for k, v in environ.items():
        if k.startswith(ENV_PREFIX):
            key = k[len(ENV_PREFIX):].lower()
            if key not in names:
                raise ConfigError(f"unknown config key {key!r} from environment variable {k}")
            out[key] = v
    return out


def load_config(path=None, flags: Optional[Mapping[str, str]] = None,
                environ: Optional[Mapping[str, str]] = None) -> RunConfig:
    """Merge defaults, an optional key=value file, ``MCEC_*`` variables and flags."""
    cfg = RunConfig()
    if path:
        cfg = RunConfig.from_strings(read_kv(path), cfg)
    cfg = RunConfig.from_strings(env_overrides(environ), cfg)
    if flags:
        cfg = RunConfig.from_strings(flags, cfg)
    return cfg
