"""Command-line front end.

``mcecontrol {fit,ucl,arl,phase1,chart} [options]``. Every run writes the
merged configuration to ``<out>/effective-config``; feeding that file back
with ``--config`` reproduces the run.
"""
from __future__ import annotations

import argparse
import logging
import math
import sys
from html import escape
from pathlib import Path
from typing import Dict, List, Optional, Sequence

import numpy as np

from .arl import arl_grid
from .config import ENV_PREFIX, RunConfig, load_config
from .control import ControlDesign, estimate_params, find_ucl, t2
from .copula import CopulaDensity, build_targets, fit_copula
from .errors import ConfigError, MCEError, StageError
from .io import fmt, load_csv, parse_rows, write_csv, write_kv
from .joint import JointModel, RandomStream
from .marginal import Support, auto_support, fit_marginal
from .numerics import gauss_legendre
from .phase1 import Phase1Result, classify_phase2, run_phase1
from .presets import group_measures
from .ranks import BivariateSample, DependenceMeasures, estimate_dependence

log = logging.getLogger("mcecontrol")

# flag name -> config key
FLAG_KEYS = {
    "data": "data", "alpha": "alpha", "r": "r", "seed": "seed", "order": "quadrature_order",
    "support_x": "support_x", "support_y": "support_y", "dep_policy": "dep_policy", "reps": "reps",
    "cap": "cap", "out": "out", "rows": "rows", "phase2_rows": "phase2_rows", "group": "group",
    "mu_x": "mu_x", "mu_y": "mu_y", "x_column": "x_column", "y_column": "y_column",
    "chart_params": "chart_params", "ucl_params": "ucl_params", "on_infeasible": "on_infeasible",
    "workers": "workers",
}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="mcecontrol", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)
    for name, help_ in (
        ("fit", "fit marginals and copula; write coefficient tables"),
        ("ucl", "solve the upper control limit"),
        ("arl", "Monte Carlo ARL over a shift grid"),
        ("phase1", "iterative phase-I filtering"),
        ("chart", "phase-I filtering plus control chart CSV/SVG"),
    ):
        sp = sub.add_parser(name, help=help_)
        sp.add_argument("--config", help="key=value configuration file")
        sp.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                        help="set any configuration key (repeatable)")
        for flag in FLAG_KEYS:
            sp.add_argument("--" + flag.replace("_", "-"), dest=flag, default=None)
    return p


def _flags(ns: argparse.Namespace) -> Dict[str, str]:
    out = {}
    for flag, key in FLAG_KEYS.items():
        v = getattr(ns, flag, None)
        if v is not None:
            out[key] = v
    for item in ns.set:
        if "=" not in item:
            raise ConfigError(f"--set expects KEY=VALUE, got {item!r}")
        k, v = item.split("=", 1)
        out[k.strip()] = v.strip()
    return out


# --- model assembly -----------------------------------------------------------

def _load(cfg: RunConfig):
    data = load_csv(cfg.data, cfg.x_column or None, cfg.y_column or None)
    return data, data.subset(parse_rows(cfg.rows, data.n))


def _dependence(cfg: RunConfig, data: Optional[BivariateSample], sample: Optional[BivariateSample]):
    if cfg.group:
        return group_measures(cfg.group)
    if sample is not None:
        if cfg.dep_policy == "fixed-all":
            return estimate_dependence(data.subset(parse_rows(cfg.reference_rows, data.n)))
        return estimate_dependence(sample)
    return DependenceMeasures(cfg.rho, cfg.nu1, cfg.nu2, cfg.eta)


def _support(cfg: RunConfig, axis: str, values) -> Support:
    spec = cfg.support(axis)
    if isinstance(spec, Support):
        return spec
    if values is None:
        return Support(0.0, math.inf)
    return auto_support(values)


def _model(cfg: RunConfig):
    data = sample = None
    if cfg.data:
        data, sample = _load(cfg)
    dep = _dependence(cfg, data, sample)
    sx = _support(cfg, "x", None if sample is None else sample.x)
    sy = _support(cfg, "y", None if sample is None else sample.y)
    mx = cfg.mu_x if sample is None else float(sample.x.mean())
    my = cfg.mu_y if sample is None else float(sample.y.mean())
    solver = cfg.solver()
    cop = fit_copula(build_targets(dep, cfg.r), gauss_legendre(cfg.quadrature_order), solver,
                     cfg.on_infeasible, cfg.min_margin)
    model = JointModel(fit_marginal(mx, sx, solver), fit_marginal(my, sy, solver), cop)
    return model, dep, sample


def _write_model(out: Path, model: JointModel, dep: DependenceMeasures) -> None:
    marg = {}
    marg.update(model.margin_x.to_dict("x_"))
    marg.update(model.margin_y.to_dict("y_"))
    write_kv(out / "marginals.txt", marg, "density exp(-lambda0 - lambda1 * x) on [support_lo, support_hi]")
    c = model.copula
    items = {"rho": dep.rho, "nu1": dep.nu1, "nu2": dep.nu2, "eta": dep.eta}
    items.update(c.to_dict())
    if c.targets is not None:
        for k, v in zip(("target", "achieved"), (c.targets, c.achieved_moments)):
            vec = v.vector()
            items.update({f"{k}_m{i}": float(x) for i, x in enumerate(vec, 1)})
    write_kv(out / "copula.txt", items, "c(u,v) = exp(-1 - lambda0 - sum lambda_i (u^i+v^i) - ...)")
    write_kv(out / "model.txt", {**marg, **c.to_dict()})


def _design(cfg: RunConfig, model: JointModel, sample: Optional[BivariateSample]) -> ControlDesign:
    params = estimate_params(cfg.ucl_params, model=model, sample=sample)
    return find_ucl(model, params, cfg.alpha, gauss_legendre(cfg.ucl_order))


# --- commands -------------------------------------------------------------------

def cmd_fit(cfg: RunConfig, out: Path) -> None:
    model, dep, _ = _model(cfg)
    _write_model(out, model, dep)


def cmd_ucl(cfg: RunConfig, out: Path) -> None:
    model, dep, sample = _model(cfg)
    _write_model(out, model, dep)
    write_kv(out / "design.txt", _design(cfg, model, sample).to_dict())


def _floats(text: str) -> List[float]:
    return [float(v) for v in text.split(",") if v.strip()]


def cmd_arl(cfg: RunConfig, out: Path) -> None:
    model, dep, sample = _model(cfg)
    design = _design(cfg, model, sample)
    _write_model(out, model, dep)
    write_kv(out / "design.txt", design.to_dict())
    rows = arl_grid(model, design, _floats(cfg.deltas_x), _floats(cfg.deltas_y), cfg.reps, cfg.cap,
                    RandomStream(cfg.seed), cfg.workers)
    write_csv(out / "arl_table.csv",
              ["delta_x", "delta_y", "mean_rl", "var_rl", "beta", "replications", "truncated_runs"],
              [(dx, dy, r.mean_rl, r.var_rl, r.beta, r.replications, r.truncated_runs) for dx, dy, r in rows])


def _phase1(cfg: RunConfig):
    if not cfg.data:
        raise ConfigError("phase1 needs --data")
    data, sample = _load(cfg)
    ref = data.subset(parse_rows(cfg.reference_rows, data.n))
    res = run_phase1(sample, cfg.phase1(), reference=ref)
    return data, sample, res


def _write_stages(out: Path, res: Phase1Result, row_ids: np.ndarray) -> None:
    rows = []
    for s in res.stages:
        flagged = " ".join(str(int(row_ids[i])) for i in s.flagged_indices)
        rows.append((s.stage_index, s.retained_indices.size, s.design.ucl, s.design.achieved_coverage,
                     s.dependence.rho, s.dependence.nu1, s.dependence.nu2, s.dependence.eta,
                     s.model.copula.shrink, flagged))
    write_csv(out / "stages.csv", ["stage", "retained_n", "ucl", "achieved_coverage", "rho", "nu1", "nu2", "eta",
                                   "shrink", "flagged_rows"], rows)
    d = res.final_design.to_dict()
    d.update({f"chart_{k}": v for k, v in res.final_chart_params.to_dict().items()})
    d["stages"] = len(res.stages)
    d["stopped_early"] = res.stopped_early
    if res.diagnostic:
        d["diagnostic"] = res.diagnostic.replace("\n", " ")
    write_kv(out / "design.txt", d)


def _chart_rows(cfg: RunConfig, data: BivariateSample, res: Phase1Result):
    row_ids = parse_rows(cfg.rows, data.n) + 1
    final = res.final_stage
    ucl = res.final_design.ucl
    rows = []
    for j, rid in enumerate(row_ids):
        v = final.t2_values[j]
        if np.isnan(v):  # removed in an earlier stage: score against the final design
            v = t2(res.final_chart_params, data.x[rid - 1], data.y[rid - 1])
        rows.append((int(rid), 1, float(v), int(v > ucl), ucl, 0.0))
    if cfg.phase2_rows:
        idx = parse_rows(cfg.phase2_rows, data.n)
        p2 = classify_phase2(res, data.subset(idx))
        rows += [(int(i + 1), 2, float(v), int(f), ucl, 0.0) for i, v, f in zip(idx, p2.t2_values, p2.flags)]
    return rows


def cmd_phase1(cfg: RunConfig, out: Path) -> None:
    data, sample, res = _phase1(cfg)
    _write_stages(out, res, parse_rows(cfg.rows, data.n) + 1)
    if cfg.phase2_rows:
        idx = parse_rows(cfg.phase2_rows, data.n)
        p2 = classify_phase2(res, data.subset(idx))
        write_csv(out / "phase2.csv", ["row", "t2", "out_of_control"],
                  [(int(i + 1), v, int(f)) for i, v, f in zip(idx, p2.t2_values, p2.flags)])


def cmd_chart(cfg: RunConfig, out: Path) -> None:
    data, sample, res = _phase1(cfg)
    _write_stages(out, res, parse_rows(cfg.rows, data.n) + 1)
    rows = _chart_rows(cfg, data, res)
    write_csv(out / "chart.csv", ["row", "phase", "t2", "out_of_control", "ucl", "lcl"], rows)
    (out / "chart.svg").write_text(render_svg(rows, res.final_design.ucl))


def render_svg(rows: Sequence[tuple], ucl: float, width: int = 720, height: int = 360) -> str:
    """Static SVG control chart: T^2 per row, UCL and LCL lines."""
    pad_l, pad_r, pad_t, pad_b = 60, 20, 20, 40
    n = len(rows)
    ymax = max([ucl] + [r[2] for r in rows]) * 1.08 or 1.0
    xs = lambda i: pad_l + (width - pad_l - pad_r) * (i + 0.5) / max(n, 1)
    ys = lambda v: pad_t + (height - pad_t - pad_b) * (1.0 - v / ymax)
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="11">',
        f'<rect width="{width}" height="{height}" fill="white"/>',
        f'<line x1="{pad_l}" y1="{ys(0):.2f}" x2="{width - pad_r}" y2="{ys(0):.2f}" stroke="black"/>',
        f'<line x1="{pad_l}" y1="{pad_t}" x2="{pad_l}" y2="{ys(0):.2f}" stroke="black"/>',
        f'<line x1="{pad_l}" y1="{ys(ucl):.2f}" x2="{width - pad_r}" y2="{ys(ucl):.2f}" '
        f'stroke="red" stroke-dasharray="6,4"/>',
        f'<text x="{width - pad_r}" y="{ys(ucl) - 4:.2f}" text-anchor="end" fill="red">UCL={escape(fmt(ucl))}</text>',
        f'<text x="{width - pad_r}" y="{ys(0) - 4:.2f}" text-anchor="end">LCL=0</text>',
    ]
    for k in range(5):
        v = ymax * k / 4
        parts.append(f'<text x="{pad_l - 6}" y="{ys(v) + 4:.2f}" text-anchor="end">{v:.3g}</text>')
    pts = " ".join(f"{xs(i):.2f},{ys(r[2]):.2f}" for i, r in enumerate(rows))
    parts.append(f'<polyline points="{pts}" fill="none" stroke="steelblue"/>')
    for i, r in enumerate(rows):
        color = "red" if r[3] else "steelblue"
        parts.append(f'<circle cx="{xs(i):.2f}" cy="{ys(r[2]):.2f}" r="3" fill="{color}"/>')
        parts.append(f'<text x="{xs(i):.2f}" y="{height - pad_b + 14}" text-anchor="middle" '
                     f'font-size="8">{r[0]}</text>')
    parts.append(f'<text x="{width / 2:.0f}" y="{height - 6}" text-anchor="middle">row</text>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


COMMANDS = {"fit": cmd_fit, "ucl": cmd_ucl, "arl": cmd_arl, "phase1": cmd_phase1, "chart": cmd_chart}


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    ns = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if ns.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        cfg = load_config(ns.config, _flags(ns))
        out = Path(cfg.out)
        out.mkdir(parents=True, exist_ok=True)
        cfg.write(out / "effective-config")
        COMMANDS[ns.command](cfg, out)
    except ConfigError as exc:
        print(f"error code={exc.code} message={exc}", file=sys.stderr)
        return 2
    except MCEError as exc:
        stage = f" stage={exc.stage}" if isinstance(exc, StageError) else ""
        print(f"error code={exc.code}{stage} message={exc}", file=sys.stderr)
        return 1
    except (ValueError, OSError) as exc:
        print(f"error code={type(exc).__name__} message={exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
