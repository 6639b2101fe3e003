"""Maximum copula entropy density on the unit square.

The density maximizes Shannon entropy on I^2 subject to

* uniform-margin power moments ``E[U^i] = E[V^i] = 1/(i+1)``, i = 1..r
  (imposed through the symmetric features ``u^i + v^i``);
* ``E[UV] = (rho + 3) / 12``;
* ``E[U^2 V + U V^2] = (4 rho - nu1 - nu2 + 4) / 12``;
* ``E[U^2 V^2] = (eta + 1/5) / 6``.

Its form is

    c(u, v) = exp(-1 - lambda0 - sum_i lambda_i (u^i + v^i)
                  - lambda_uv uv - lambda_sym (u^2 v + u v^2) - lambda_22 u^2 v^2).

The coefficients come from minimizing the convex dual
``log int exp(-lambda . g) + lambda . m`` on a tensor Gauss-Legendre grid.
Internally the features are replaced by an equivalent shifted-Legendre
basis, which spans the same function space (up to constants) but gives a
far better conditioned Hessian; the result is mapped back to the
monomial coefficients above.

Not every target vector is attainable. :func:`feasibility_margin` solves a
small linear program on the quadrature grid that certifies whether some
strictly positive density with the requested moments exists, and
:func:`shrink_to_feasible` pulls infeasible targets toward independence.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

import numpy as np
from numpy.polynomial import legendre as npleg
from scipy import optimize

from .errors import (
    Infeasible,
    MaxIterationsExceeded,
    NonFiniteIntegrand,
    ObjectiveUnbounded,
    SingularHessian,
)
from .numerics import QuadratureRule, SolverConfig, gauss_legendre, newton_minimize
from .ranks import DependenceMeasures

__all__ = [
    "ConstraintTargets",
    "CopulaDensity",
    "build_targets",
    "fit_copula",
    "copula_pdf",
    "copula_logpdf",
    "copula_moments",
    "independence_copula",
    "feasibility_margin",
    "shrink_to_feasible",
    "features",
]

MAX_R = 8
VERIFY_TOLERANCE = 1e-6


class Unresolved(ArithmeticError):
    """Internal signal: the grid solution does not survive a finer rule."""


@dataclass(frozen=True)
class ConstraintTargets:
    """Moment targets of the copula fit.

    ``symmetric_moments[i-1]`` is the target of ``E[U^i]`` (and ``E[V^i]``);
    the fitted feature ``u^i + v^i`` therefore has target twice that.
    """

    r: int
    symmetric_moments: Tuple[float, ...]
    uv_target: float
    u2v_sym_target: float
    u2v2_target: float

    def __post_init__(self):
        if not 1 <= self.r <= MAX_R:
            raise ValueError(f"r must lie in 1..{MAX_R}")
        if len(self.symmetric_moments) != self.r:
            raise ValueError("symmetric_moments must have r entries")
        if not all(math.isfinite(v) for v in self.vector()):
            raise ValueError("targets must be finite")

    def vector(self) -> np.ndarray:
        """Targets of the feature vector returned by :func:`features`."""
        return np.array(
            [2.0 * m for m in self.symmetric_moments]
            + [self.uv_target, self.u2v_sym_target, self.u2v2_target]
        )

    @classmethod
    def from_vector(cls, r: int, vec) -> "ConstraintTargets":
        vec = np.asarray(vec, dtype=float)
        return cls(r, tuple(float(v) / 2.0 for v in vec[:r]), float(vec[r]), float(vec[r + 1]), float(vec[r + 2]))

    def dependence(self) -> Tuple[float, float, float]:
        """Recover ``(rho, nu1 + nu2, eta)`` implied by the targets."""
        rho = 12.0 * self.uv_target - 3.0
        nu_sum = 4.0 * rho + 4.0 - 12.0 * self.u2v_sym_target
        eta = 6.0 * self.u2v2_target - 0.2
        return rho, nu_sum, eta


def build_targets(d: DependenceMeasures, r: int = 5) -> ConstraintTargets:
    """Constraint targets for dependence measures ``d``.

    The ``u^2 v`` and ``u v^2`` constraints are merged into their sum since
    the density carries a single symmetric coefficient for them.
    """
    return ConstraintTargets(
        r=int(r),
        symmetric_moments=tuple(1.0 / (i + 1) for i in range(1, int(r) + 1)),
        uv_target=(d.rho + 3.0) / 12.0,
        u2v_sym_target=(4.0 * d.rho - d.nu1 - d.nu2 + 4.0) / 12.0,
        u2v2_target=(d.eta + 0.2) / 6.0,
    )


def features(u, v, r: int) -> np.ndarray:
    """Monomial features ``(u^i + v^i, uv, u^2 v + u v^2, u^2 v^2)``, shape (n, r+3)."""
    u = np.asarray(u, dtype=float).ravel()
    v = np.asarray(v, dtype=float).ravel()
    cols = [u ** i + v ** i for i in range(1, r + 1)]
    cols += [u * v, u * u * v + u * v * v, (u * v) ** 2]
    return np.column_stack(cols)


def _shifted_legendre(x: np.ndarray, k: int) -> np.ndarray:
    c = np.zeros(k + 1)
    c[k] = 1.0
    return npleg.legval(2.0 * x - 1.0, c)


def _orth_features(u: np.ndarray, v: np.ndarray, r: int) -> np.ndarray:
    P = {k: (_shifted_legendre(u, k), _shifted_legendre(v, k)) for k in (1, 2)}
    cols = [_shifted_legendre(u, i) + _shifted_legendre(v, i) for i in range(1, r + 1)]
    cols += [
        P[1][0] * P[1][1],
        P[2][0] * P[1][1] + P[1][0] * P[2][1],
        P[2][0] * P[2][1],
    ]
    return np.column_stack(cols)


@dataclass(frozen=True)
class CopulaDensity:
    """Fitted maximum copula entropy density.

    ``lam`` holds ``(lambda0, lambda_1..lambda_r, lambda_uv, lambda_sym,
    lambda_22)`` in the ``exp(-1 - lambda0 - ...)`` convention, so the
    independence copula has ``lambda0 = -1`` and all other entries zero.
    """

    r: int
    lam: np.ndarray
    achieved_moments: ConstraintTargets
    residual_norm: float
    targets: Optional[ConstraintTargets] = None
    iterations: int = 0
    shrink: float = 1.0
    feasibility: Optional[float] = None
    dual_history: Tuple[float, ...] = field(default=(), repr=False)

    @property
    def lambda0(self) -> float:
        return float(self.lam[0])

    @property
    def coefficients(self) -> np.ndarray:
        return self.lam[1:]

    def names(self) -> List[str]:
        return (
            ["lambda0"]
            + [f"lambda{i}" for i in range(1, self.r + 1)]
            + ["lambda_uv", "lambda_u2v_sym", "lambda_u2v2"]
        )

    def to_dict(self) -> Dict[str, float]:
        out = {"r": self.r}
        out.update({k: float(v) for k, v in zip(self.names(), self.lam)})
        out["residual_norm"] = self.residual_norm
        out["shrink"] = self.shrink
        return out

    @classmethod
    def from_dict(cls, d: Dict[str, float], rule: Optional[QuadratureRule] = None) -> "CopulaDensity":
        r = int(d["r"])
        names = (
            ["lambda0"] + [f"lambda{i}" for i in range(1, r + 1)] + ["lambda_uv", "lambda_u2v_sym", "lambda_u2v2"]
        )
        lam = np.array([float(d[k]) for k in names])
        stub = cls(r, lam, ConstraintTargets.from_vector(r, np.zeros(r + 3)), float(d.get("residual_norm", 0.0)),
                   shrink=float(d.get("shrink", 1.0)))
        ach = copula_moments(stub, rule or gauss_legendre(64))
        return cls(r, lam, ach, stub.residual_norm, shrink=stub.shrink)


def copula_logpdf(c: CopulaDensity, u, v) -> np.ndarray:
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    shape = np.broadcast(u, v).shape
    g = features(np.broadcast_to(u, shape), np.broadcast_to(v, shape), c.r)
    return (-1.0 - c.lam[0] - g @ c.lam[1:]).reshape(shape)


def copula_pdf(c: CopulaDensity, u, v):
    """Copula density; symmetric in ``(u, v)`` and strictly positive."""
    out = np.exp(copula_logpdf(c, u, v))
    return float(out) if out.ndim == 0 else out


def copula_moments(c: CopulaDensity, rule: QuadratureRule) -> ConstraintTargets:
    """Quadrature values of every constraint integral under ``c``."""
    u, v, w = rule.tensor()
    logc = copula_logpdf(c, u, v)
    p = w * np.exp(logc)
    p = p / p.sum()  # absorb the (tiny) normalization error of the rule
    return ConstraintTargets.from_vector(c.r, features(u, v, c.r).T @ p)


def independence_copula(r: int = 5) -> CopulaDensity:
    lam = np.zeros(r + 4)
    lam[0] = -1.0
    t = build_targets(DependenceMeasures(0.0, 0.0, 0.0, 7.0 / 15.0), r)
    return CopulaDensity(r, lam, t, 0.0, targets=t)


class _Basis:
    """Quadrature grid plus the monomial to Legendre feature map.

    ``B = const + G @ T`` holds exactly on polynomials of this degree; it
    is recovered by least squares on the grid.
    """

    _cache: Dict[Tuple[int, int], "_Basis"] = {}

    def __init__(self, rule: QuadratureRule, r: int):
        self.u, self.v, self.w = rule.tensor()
        self.G = features(self.u, self.v, r)
        self.B = _orth_features(self.u, self.v, r)
        A = np.column_stack([np.ones(self.u.size), self.G])
        coef, *_ = np.linalg.lstsq(A, self.B, rcond=None)
        self.const = coef[0]
        self.T = coef[1:]
        self.logw = np.log(self.w)

    @classmethod
    def get(cls, rule: QuadratureRule, r: int) -> "_Basis":
        key = (rule.order, r)
        if key not in cls._cache:
            cls._cache[key] = cls(rule, r)
        return cls._cache[key]


def feasibility_margin(t: ConstraintTargets, rule: QuadratureRule) -> float:
    """Signed interior margin of ``t`` on the quadrature grid.

    Solves ``max s`` over densities ``q`` on the grid nodes with
    ``q_k >= s`` (relative to the uniform density) and all moments equal to
    the targets. A positive value means a strictly positive density with
    these moments exists (the independence targets give 1); zero or a
    negative value certifies that none does, in which case the
    maximum-entropy problem has no solution. The value is clamped to
    ``[-1, 1]``; ``-1`` also stands for targets that no signed grid
    measure reproduces.
    """
    basis = _Basis.get(rule, t.r)
    m = t.vector()
    W = basis.w
    G = basis.G
    n = W.size
    # variables: z_k >= 0 (n of them), s in [-1, 1];  q_k = s + z_k
    A_eq = np.empty((G.shape[1] + 1, n + 1))
    A_eq[0, :n] = W
    A_eq[0, n] = 1.0
    A_eq[1:, :n] = (G * W[:, None]).T
    A_eq[1:, n] = G.T @ W
    b_eq = np.concatenate([[1.0], m])
    cost = np.zeros(n + 1)
    cost[n] = -1.0
    bounds = [(0, None)] * n + [(-1.0, 1.0)]
    res = optimize.linprog(cost, A_eq=A_eq, b_eq=b_eq, bounds=bounds, method="highs")
    if res.status != 0:
        return -1.0
    return float(res.x[n])


def shrink_to_feasible(
    t: ConstraintTargets, rule: QuadratureRule, min_margin: float = 5e-2, tol: float = 1e-4
) -> Tuple[ConstraintTargets, float]:
    """Largest ``s in [0, 1]`` with ``indep + s (t - indep)`` at margin >= ``min_margin``.

    The feasible set is convex and contains the independence targets in its
    interior, and the margin is concave along the segment, so bisection on
    ``s`` is exact up to ``tol``. The margin is taken as the smaller of the
    values on ``rule`` and on the next-order rule, so that targets which are
    only attainable thanks to the placement of one particular node set are
    rejected.
    """
    indep = build_targets(DependenceMeasures(0.0, 0.0, 0.0, 7.0 / 15.0), t.r).vector()
    m = t.vector()

    def at(s):
        return ConstraintTargets.from_vector(t.r, indep + s * (m - indep))

    check = gauss_legendre(rule.order + 1)

    def margin(tt):
        return min(feasibility_margin(tt, rule), feasibility_margin(tt, check))

    if margin(t) >= min_margin:
        return t, 1.0
    lo, hi = 0.0, 1.0
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if margin(at(mid)) >= min_margin:
            lo = mid
        else:
            hi = mid
    return at(lo), lo


def fit_copula(
    t: ConstraintTargets,
    rule: Optional[QuadratureRule] = None,
    cfg: SolverConfig = SolverConfig(),
    on_infeasible: str = "raise",
    min_margin: float = 5e-2,
) -> CopulaDensity:
    """Solve for the maximum copula entropy density matching ``t``.

    Parameters
    ----------
    t : ConstraintTargets
    rule : QuadratureRule, optional
        One-dimensional rule for the tensor grid (order 64 by default).
    cfg : SolverConfig
        ``residual_tolerance`` bounds the max-abs constraint residual.
    on_infeasible : {"raise", "shrink"}
        What to do when no density matches the targets. ``"raise"`` raises
        :class:`Infeasible`; ``"shrink"`` moves the targets toward
        independence until their feasibility margin reaches
        ``min_margin`` and fits those, recording the factor in
        ``CopulaDensity.shrink``.

    Raises
    ------
    Infeasible
        The targets lie outside (or on the boundary of) the attainable set.
    MaxIterationsExceeded
        Newton ran out of iterations on a feasible problem.
    """
    if on_infeasible not in ("raise", "shrink"):
        raise ValueError("on_infeasible must be 'raise' or 'shrink'")
    rule = rule or gauss_legendre(64)
    shrink = 1.0
    margin = None
    if on_infeasible == "shrink":
        t_fit, shrink = shrink_to_feasible(t, rule, min_margin)
        margin = feasibility_margin(t_fit, rule)
    else:
        t_fit = t
    try:
        c = _solve(t_fit, rule, cfg)
    except (ObjectiveUnbounded, SingularHessian, MaxIterationsExceeded, NonFiniteIntegrand, Unresolved) as exc:
        margin = min(feasibility_margin(t_fit, rule), feasibility_margin(t_fit, gauss_legendre(rule.order + 1)))
        if margin <= min_margin * 1e-3 or isinstance(exc, (ObjectiveUnbounded, SingularHessian, Unresolved)):
            raise Infeasible(
                f"no copula density matches the targets (feasibility margin {margin:.3g}): {exc}",
                margin=margin,
            ) from exc
        raise
    return CopulaDensity(
        c.r, c.lam, c.achieved_moments, c.residual_norm, targets=t, iterations=c.iterations,
        shrink=shrink, feasibility=margin, dual_history=c.dual_history,
    )


def _solve(t: ConstraintTargets, rule: QuadratureRule, cfg: SolverConfig) -> CopulaDensity:
    basis = _Basis.get(rule, t.r)
    m = t.vector()
    m_b = basis.const + m @ basis.T
    B, logw = basis.B, basis.logw
    # For any feasible target the dual is bounded below by log(min weight).
    lower = float(np.min(logw)) - 1.0

    def objective(lam):
        e = logw - B @ lam
        mx = e.max()
        p = np.exp(e - mx)
        z = p.sum()
        p /= z
        val = mx + math.log(z) + lam @ m_b
        mean = B.T @ p
        grad = m_b - mean
        Bc = B - mean
        hess = (Bc * p[:, None]).T @ Bc
        return val, grad, hess

    inner = SolverConfig(cfg.max_iterations, cfg.residual_tolerance * 1e-2, cfg.damping_floor)
    res = newton_minimize(objective, np.zeros(m.size), inner, lower_bound=lower)
    lam_b = res.x
    lam_g = basis.T @ lam_b
    e = logw - B @ lam_b
    mx = e.max()
    log_z = mx + math.log(np.exp(e - mx).sum())
    lam0 = float(lam_b @ basis.const) + log_z - 1.0
    lam = np.concatenate([[lam0], lam_g])
    stub = CopulaDensity(t.r, lam, t, 0.0)
    ach = copula_moments(stub, rule)
    resid = float(np.max(np.abs(ach.vector() - m)))
    if resid > cfg.residual_tolerance:
        raise MaxIterationsExceeded(f"constraint residual {resid:.3g} above tolerance after convergence")
    # A genuine density is resolved by the grid; a fit that only exists on
    # this node set (mass piled onto a few nodes) is not.
    check = gauss_legendre(2 * rule.order + 1)
    cu, cv, cw = check.tensor()
    pc = cw * np.exp(copula_logpdf(stub, cu, cv))
    z = pc.sum()
    check_resid = max(abs(z - 1.0), float(np.max(np.abs(features(cu, cv, t.r).T @ pc / z - m))))
    if not np.isfinite(check_resid) or check_resid > VERIFY_TOLERANCE:
        raise Unresolved(
            f"fitted density is not resolved by the quadrature (check-rule residual {check_resid:.3g})"
        )
    return CopulaDensity(t.r, lam, ach, resid, targets=t, iterations=res.iterations,
                         dual_history=tuple(res.history))
