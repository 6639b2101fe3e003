"""Acceptance criteria 1-12.

Each test records one ``ACCEPTANCE <n> PASS|FAIL`` line (shown in the
terminal summary) and then asserts the criterion with its pinned
tolerance. Criteria that the model cannot meet fail here on purpose; the
blocking analysis is kept in the decisions ledger.
"""
import math
import time
import warnings

import numpy as np
import pytest

from conftest import ACCEPTANCE_LINES
from mcecontrol import (
    BivariateSample,
    DependenceMeasures,
    HotellingParams,
    JointModel,
    RandomStream,
    ShiftSpec,
    Support,
    arl_grid,
    build_targets,
    classify_phase2,
    copula_moments,
    copula_pdf,
    coverage_prob,
    estimate_dependence,
    estimate_params,
    find_ucl,
    fit_copula,
    fit_marginal,
    fixture_path,
    gauss_legendre,
    group_measures,
    independent_baseline,
    run_phase1,
    sample_joint,
    simulate_arl,
)
from mcecontrol.config import load_config
from mcecontrol.copula import ConstraintTargets
from mcecontrol.errors import Infeasible
from mcecontrol.io import parse_rows

from oracles import fgm_feature_targets, mc_exponential_t2, spearman_brute

GL64 = gauss_legendre(64)


def record(n, ok, detail):
    line = f"ACCEPTANCE {n} {'PASS' if ok else 'FAIL'}: {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    assert ok, line


def _fmt(d):
    return f"rho={d.rho:.7f} nu1={d.nu1:.7f} nu2={d.nu2:.7f} eta={d.eta:.7f}"


def _close(d, ref, tol):
    return all(abs(a - b) <= tol for a, b in zip((d.rho, d.nu1, d.nu2, d.eta), ref))


# --- shared models ------------------------------------------------------------

@pytest.fixture(scope="module")
def group3():
    """Group 3 at mu = (3, 5); the targets sit on the attainable boundary and are shrunk."""
    c = fit_copula(build_targets(group_measures(3)), GL64, on_infeasible="shrink")
    m = JointModel(fit_marginal(3.0, Support(0.0)), fit_marginal(5.0, Support(0.0)), c)
    return m, find_ucl(m, estimate_params("fitted", model=m), 0.05)


@pytest.fixture(scope="module")
def arl0_report(group3):
    m, d = group3
    return simulate_arl(m, m, d, reps=1000, rng=RandomStream(20240601))


def _phase1_from_config(name, data_name, overrides=None):
    cfg = load_config(fixture_path(name), overrides or {}, environ={})
    data = __import__("mcecontrol").load_csv(fixture_path(data_name))
    sample = data.subset(parse_rows(cfg.rows, data.n))
    ref = data.subset(parse_rows(cfg.reference_rows, data.n))
    res = run_phase1(sample, cfg.phase1(), reference=ref)
    p2 = None
    if cfg.phase2_rows:
        idx = parse_rows(cfg.phase2_rows, data.n)
        p2 = (idx + 1, classify_phase2(res, data.subset(idx)))
    return res, p2


def _flag_sets(res):
    return [set((s.flagged_indices + 1).tolist()) for s in res.stages]


# --- criteria -------------------------------------------------------------------

def test_criterion_01_estimators_example1(quesenberry):
    t0 = time.perf_counter()
    d = estimate_dependence(quesenberry.subset(range(20)))
    dt = time.perf_counter() - t0
    ref = (0.5636842, 0.2685579, 0.2972395, 0.7218584)
    ok = _close(d, ref, 1e-6) and dt < 1
    record(1, ok, f"{_fmt(d)} vs rho=0.5636842 nu1=0.2685579 nu2=0.2972395 eta=0.7218584 (tol 1e-6), {dt:.3f}s")


def test_criterion_02_estimators_example2(madawaska):
    t0 = time.perf_counter()
    d = estimate_dependence(madawaska)
    mx, my = madawaska.x[:70].mean(), madawaska.y[:70].mean()
    dt = time.perf_counter() - t0
    ref = (0.4722444, 0.456628, 0.4514329, 0.860833)
    means_ok = abs(mx - 80.25714) <= 1e-3 and abs(my - 9084.657) <= 1e-3
    ok = _close(d, ref, 1e-6) and means_ok and dt < 1
    record(2, ok, f"{_fmt(d)} vs rho=0.4722444 nu1=0.456628 nu2=0.4514329 eta=0.860833 (tol 1e-6); "
                  f"means {mx:.5f}, {my:.3f} ({'ok' if means_ok else 'off'}), {dt:.3f}s")


def test_criterion_03_independence_recovery():
    t0 = time.perf_counter()
    c = fit_copula(build_targets(DependenceMeasures(0.0, 0.0, 0.0, 7.0 / 15.0)), GL64)
    dt = time.perf_counter() - t0
    lam = float(np.max(np.abs(c.lam[1:])))
    dens = copula_pdf(c, 0.3, 0.7)
    ok = lam <= 1e-8 and abs(dens - 1) <= 1e-8 and dt < 5
    record(3, ok, f"max|lambda_i|={lam:.2e}, c(0.3,0.7)={dens:.12f}, {dt:.2f}s")


def test_criterion_04_constraint_satisfaction():
    t0 = time.perf_counter()
    results = []
    for g in range(1, 6):
        t = build_targets(group_measures(g))
        try:
            c = fit_copula(t, GL64)
            err = float(np.max(np.abs(copula_moments(c, GL64).vector() - t.vector())))
            results.append((g, err <= 1e-6, f"max err {err:.1e}"))
        except Infeasible as exc:
            results.append((g, False, f"Infeasible (margin {exc.margin:.2g})"))
    dt = time.perf_counter() - t0
    ok = all(r[1] for r in results) and dt < 120
    record(4, ok, "; ".join(f"group {g}: {msg}" for g, _, msg in results) + f"; {dt:.1f}s")


def test_criterion_05_sampling_round_trip():
    t0 = time.perf_counter()
    t = build_targets(group_measures(5))
    try:
        c = fit_copula(t, GL64)
    except Infeasible as exc:
        shrunk = fit_copula(t, GL64, on_infeasible="shrink")
        m = JointModel(fit_marginal(1.0, Support(0.0)), fit_marginal(1.0, Support(0.0)), shrunk)
        rho = estimate_dependence(sample_joint(m, 100_000, RandomStream(5))).rho
        record(5, False, f"group 5 targets not attainable (margin {exc.margin:.2g}); the nearest fit "
                         f"(shrink {shrunk.shrink:.3f}) gives rho_hat={rho:.4f}, target 0.4+-0.02")
        return
    m = JointModel(fit_marginal(1.0, Support(0.0)), fit_marginal(1.0, Support(0.0)), c)
    rho = estimate_dependence(sample_joint(m, 100_000, RandomStream(5))).rho
    dt = time.perf_counter() - t0
    record(5, abs(rho - 0.4) <= 0.02 and dt < 60, f"rho_hat={rho:.4f}, {dt:.1f}s")


def test_criterion_06_ucl_definition(group3, madawaska):
    fgm = fit_copula(ConstraintTargets.from_vector(5, fgm_feature_targets(0.6)), GL64)
    models = {
        "exponential baseline": independent_baseline(1.0, 1.0, Support(0.0), Support(0.0)),
        "FGM-derived": JointModel(fit_marginal(1.0, Support(0.0)), fit_marginal(3.0, Support(0, 10)), fgm),
        "group 3 (3,5)": group3[0],
    }
    res, _ = _phase1_from_config("madawaska.conf", "madawaska.csv")
    models["flood final stage"] = res.final_stage.model
    parts, ok = [], True
    for name, m in models.items():
        t0 = time.perf_counter()
        p = estimate_params("fitted", model=m)
        for alpha in (0.05, 0.01):
            d = find_ucl(m, p, alpha)
            cov = coverage_prob(m, p, d.ucl)
            good = 1 - alpha <= cov <= 1 - alpha + 1e-3
            ok &= good
            parts.append(f"{name} a={alpha}: {cov:.6f}")
        ok &= time.perf_counter() - t0 < 120
    record(6, ok, "; ".join(parts))


def test_criterion_07_arl0(arl0_report):
    r = arl0_report
    record(7, 17 <= r.mean_rl <= 23, f"group 3 in-control ARL0={r.mean_rl:.2f} over 1000 reps, window [17, 23]")


def test_criterion_08_arl1_monotone(group3):
    m, d = group3
    t0 = time.perf_counter()
    rows = arl_grid(m, d, [0.0, 0.1, 0.5, 1.0], [0.1, 0.5, 1.0], reps=1000, cap=100_000,
                    rng=RandomStream(20240601, 8))
    dt = time.perf_counter() - t0
    table = {(dx, dy): r.mean_rl for dx, dy, r in rows}
    mono = all(table[(dx, 0.1)] > table[(dx, 0.5)] > table[(dx, 1.0)] for dx in (0.0, 0.1, 0.5, 1.0))
    ok = mono and table[(1.0, 1.0)] < 10 and dt < 600
    rows_txt = " | ".join(f"dx={dx}: " + ", ".join(f"{table[(dx, dy)]:.2f}" for dy in (0.1, 0.5, 1.0))
                          for dx in (0.0, 0.1, 0.5, 1.0))
    record(8, ok, f"group 3 fitted with on_infeasible=shrink (s={m.copula.shrink:.3f}); "
                  f"ARL1 over dy=0.1,0.5,1: {rows_txt}; ARL1(1,1)={table[(1.0, 1.0)]:.2f}; {dt:.0f}s")


def test_criterion_09_geometric_law(arl0_report):
    r = arl0_report
    g = r.mean_rl ** 2 - r.mean_rl
    ratio = r.var_rl / g
    record(9, 0.5 <= ratio <= 2.0, f"var={r.var_rl:.1f}, mean^2-mean={g:.1f}, ratio {ratio:.3f}")


EX1_FLAGS = [{2, 14, 16, 18, 20}, {17}, {5}, set()]


def test_criterion_10_phase1_example1():
    t0 = time.perf_counter()
    outcomes = []
    for label, overrides in (("default supports", {"support_x": "auto", "support_y": "auto"}),
                             ("bundled config", {})):
        res, _ = _phase1_from_config("quesenberry.conf", "quesenberry.csv", overrides)
        flags = _flag_sets(res)
        ucl = res.final_design.ucl
        hit = flags == EX1_FLAGS and abs(ucl / 2.87983 - 1) <= 0.15
        stages = " -> ".join(str(sorted(f)) for f in flags)
        outcomes.append((hit, f"{label}: {stages}, final UCL {ucl:.4f}"))
    dt = time.perf_counter() - t0
    ok = any(h for h, _ in outcomes) and dt < 300
    record(10, ok, "; ".join(m for _, m in outcomes) + f"; want [2,14,16,18,20] -> [17] -> [5], UCL 2.87983+-15%")


def test_criterion_11_phase1_example2(madawaska_bold):
    t0 = time.perf_counter()
    res, (rows, p2) = _phase1_from_config("madawaska.conf", "madawaska.csv")
    dt = time.perf_counter() - t0
    flags1 = _flag_sets(res)[0]
    ucl = res.final_design.ucl
    agree = int(sum(bool(f) == (int(r) in madawaska_bold) for r, f in zip(rows, p2.flags)))
    ok = flags1 == {2, 3, 4, 61} and abs(ucl / 6.89478 - 1) <= 0.15 and agree >= 36 and dt < 300
    record(11, ok, f"stage-1 flags {sorted(flags1)}, final UCL {ucl:.5f} ({ucl / 6.89478 - 1:+.1%}), "
                   f"phase-II agreement {agree}/40, {dt:.1f}s")


def test_criterion_12_oracles():
    rng = np.random.default_rng(12)
    worst = 0.0
    for _ in range(100):
        n = int(rng.integers(5, 300))
        x, y = rng.normal(size=(2, n))
        y = y + 0.3 * x
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            rho = estimate_dependence(BivariateSample(x, y)).rho
        worst = max(worst, abs(rho - spearman_brute(x, y)))
    a_ok = worst <= 1e-12

    m = independent_baseline(1.0, 1.0, Support(0.0), Support(0.0))
    draws = mc_exponential_t2(10_000_000, seed=120)
    cov = coverage_prob(m, HotellingParams((1.0, 1.0), np.eye(2)), 2.0)
    p_mc = float(np.mean(draws <= 2.0))
    se = math.sqrt(p_mc * (1 - p_mc) / draws.size)
    b_ok = abs(cov - p_mc) <= 3 * se

    target = fgm_feature_targets(0.6)
    c = fit_copula(ConstraintTargets.from_vector(5, target), GL64)
    ferr = float(np.max(np.abs(copula_moments(c, GL64).vector() - target)))
    c_ok = ferr <= 1e-6
    record(12, a_ok and b_ok and c_ok,
           f"(a) max |rho - brute| = {worst:.1e}; (b) coverage {cov:.7f} vs MC {p_mc:.7f} "
           f"({abs(cov - p_mc) / se:.2f} SE); (c) FGM max err {ferr:.1e}")
