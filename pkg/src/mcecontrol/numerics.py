"""Deterministic numerical kernels.

Tensor Gauss-Legendre quadrature on the unit square, a damped Newton
minimizer for smooth convex objectives and a bracketing bisection root
finder. Everything here is a pure function of its inputs.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Tuple

import numpy as np
from scipy import linalg

from .errors import (
    MaxIterationsExceeded,
    NoSignChange,
    NonFiniteIntegrand,
    ObjectiveUnbounded,
    SingularHessian,
)

__all__ = [
    "QuadratureRule",
    "SolverConfig",
    "NewtonResult",
    "gauss_legendre",
    "integrate2d",
    "newton_minimize",
    "bisect",
    "logsumexp_weighted",
]


@dataclass(frozen=True)
class QuadratureRule:
    """Gauss-Legendre rule on [0, 1] with weights summing to one."""

    nodes: np.ndarray
    weights: np.ndarray

    @property
    def order(self) -> int:
        return int(self.nodes.size)

    def tensor(self) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Return flattened (u, v, w) arrays of the tensor-product rule.

        Row-major order: u varies slowest. The summation order is fixed so
        repeated evaluations are bit-identical.
        """
        uu, vv = np.meshgrid(self.nodes, self.nodes, indexing="ij")
        ww = np.outer(self.weights, self.weights)
        return uu.ravel(), vv.ravel(), ww.ravel()


@dataclass(frozen=True)
class SolverConfig:
    max_iterations: int = 200
    residual_tolerance: float = 1e-8
    damping_floor: float = 1e-6

    def __post_init__(self):
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")
        if not self.residual_tolerance > 0:
            raise ValueError("residual_tolerance must be > 0")
        if not 0 < self.damping_floor <= 1:
            raise ValueError("damping_floor must lie in (0, 1]")


_RULE_CACHE: dict = {}


def gauss_legendre(order: int) -> QuadratureRule:
    """Gauss-Legendre rule with ``order`` nodes mapped to [0, 1].

    Examples
    --------
    >>> rule = gauss_legendre(2)
    >>> np.allclose(rule.nodes, [0.5 - 0.5 / np.sqrt(3), 0.5 + 0.5 / np.sqrt(3)])
    True
    """
    order = int(order)
    if order < 1:
        raise ValueError("order must be >= 1")
    rule = _RULE_CACHE.get(order)
    if rule is None:
        x, w = np.polynomial.legendre.leggauss(order)
        nodes = 0.5 * (x + 1.0)
        # enforce exact symmetry about 0.5
        nodes = 0.5 * (nodes + (1.0 - nodes[::-1]))
        weights = 0.5 * (w + w[::-1]) / 2.0
        weights = weights / weights.sum()
        nodes.setflags(write=False)
        weights.setflags(write=False)
        rule = QuadratureRule(nodes, weights)
        _RULE_CACHE[order] = rule
    return rule


def integrate2d(f: Callable[[np.ndarray, np.ndarray], np.ndarray], rule: QuadratureRule) -> float:
    """Tensor-product quadrature of ``f(u, v)`` over the unit square.

    ``f`` is called once with flattened node arrays and must be vectorized.
    """
    u, v, w = rule.tensor()
    vals = np.broadcast_to(np.asarray(f(u, v), dtype=float), u.shape)
    if not np.all(np.isfinite(vals)):
        raise NonFiniteIntegrand("integrand is not finite at some quadrature node")
    return float(np.dot(w, vals))


def logsumexp_weighted(logf: np.ndarray, w: np.ndarray) -> float:
    """``log(sum(w * exp(logf)))`` with the maximum exponent subtracted."""
    mx = float(np.max(logf))
    return mx + float(np.log(np.dot(w, np.exp(logf - mx))))


@dataclass
class NewtonResult:
    x: np.ndarray
    fun: float
    grad_norm: float
    iterations: int
    history: list = field(default_factory=list)


def _newton_step(H: np.ndarray, g: np.ndarray) -> np.ndarray:
    try:
        c = linalg.cho_factor(H, check_finite=True)
        return -linalg.cho_solve(c, g)
    except (linalg.LinAlgError, ValueError):
        pass
    n = H.shape[0]
    jitter = 1e-10 * float(np.trace(H)) / n
    try:
        c = linalg.cho_factor(H + jitter * np.eye(n), check_finite=True)
        return -linalg.cho_solve(c, g)
    except (linalg.LinAlgError, ValueError) as exc:
        raise SingularHessian("Hessian is not positive definite after jitter") from exc


def newton_minimize(
    objective: Callable[[np.ndarray], Tuple[float, np.ndarray, np.ndarray]],
    x0,
    cfg: SolverConfig = SolverConfig(),
    lower_bound: float | None = None,
) -> NewtonResult:
    """Damped Newton minimization of a smooth convex function.

    Parameters
    ----------
    objective : callable
        ``objective(x) -> (value, gradient, hessian)``.
    x0 : array_like
        Starting point.
    cfg : SolverConfig
        Iteration cap, gradient tolerance (max-norm) and the smallest
        backtracking step length.
    lower_bound : float, optional
        A value the objective can never fall below at a finite minimizer.
        Crossing it raises :class:`ObjectiveUnbounded`, which callers use
        to detect an unbounded dual.

    Returns
    -------
    NewtonResult
        ``x`` satisfies ``max|grad| <= cfg.residual_tolerance``.
    """
    x = np.array(x0, dtype=float, ndmin=1)
    f, g, H = objective(x)
    history = [f]
    for it in range(cfg.max_iterations + 1):
        gnorm = float(np.max(np.abs(g)))
        if not np.isfinite(f) or not np.isfinite(gnorm):
            raise NonFiniteIntegrand("objective or gradient is not finite")
        if gnorm <= cfg.residual_tolerance:
            return NewtonResult(x, f, gnorm, it, history)
        if it == cfg.max_iterations:
            break
        step = _newton_step(np.atleast_2d(H), g)
        # round-off slack: near the optimum the decrease is below one ulp
        slack = 8.0 * np.finfo(float).eps * (1.0 + abs(f))
        t = 1.0
        while True:
            x_new = x + t * step
            f_new, g_new, H_new = objective(x_new)
            if np.isfinite(f_new) and f_new <= f + slack:
                break
            t *= 0.5
            if t < cfg.damping_floor:
                raise MaxIterationsExceeded(
                    f"line search stalled at iteration {it} (|grad|={gnorm:.3g})"
                )
        x, f, g, H = x_new, f_new, g_new, H_new
        history.append(f)
        if lower_bound is not None and f < lower_bound:
            raise ObjectiveUnbounded(f"objective {f:.6g} fell below bound {lower_bound:.6g}")
    raise MaxIterationsExceeded(
        f"no convergence in {cfg.max_iterations} iterations (|grad|={gnorm:.3g})"
    )


def bisect(g: Callable[[float], float], lo: float, hi: float, tol: float = 1e-12) -> float:
    """Root of a monotone function on ``[lo, hi]`` by bisection.

    The returned point is the midpoint of a sign-change bracket of width at
    most ``tol`` and always lies inside ``[lo, hi]``.
    """
    glo, ghi = g(lo), g(hi)
    if glo == 0:
        return float(lo)
    if ghi == 0:
        return float(hi)
    if np.sign(glo) == np.sign(ghi):
        raise NoSignChange(f"g({lo})={glo:.6g} and g({hi})={ghi:.6g} share a sign")
    a, b = float(lo), float(hi)
    while b - a > tol:
        mid = 0.5 * (a + b)
        if mid <= a or mid >= b:
            break
        gm = g(mid)
        if gm == 0:
            return mid
        if np.sign(gm) == np.sign(glo):
            a = mid
        else:
            b = mid
    return 0.5 * (a + b)
