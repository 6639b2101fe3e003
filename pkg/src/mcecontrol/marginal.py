"""Univariate maximum-entropy marginals under a mean constraint.

With a single mean constraint the maximum-entropy density on a support
``[lo, hi]`` is a truncated exponential,

    f(x) = exp(-lambda0 - lambda1 * x),   lo <= x <= hi,

where ``lambda0`` is fixed by normalization and ``lambda1`` by the mean.
``lambda0`` is the fully normalized intercept; intercepts written in the
``exp(-1 - lambda0 - ...)`` convention differ from it by exactly one.

All closed forms below are written in terms of ``a = lambda1 * (hi - lo)``
and evaluated with ``expm1``/``log1p`` so they stay accurate for tiny and
for very large slopes.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence, Tuple

import numpy as np

from .errors import InfeasibleMean
from .numerics import SolverConfig, newton_minimize

__all__ = [
    "Support",
    "MaxEntMarginal",
    "fit_marginal",
    "marginal_pdf",
    "marginal_logpdf",
    "marginal_cdf",
    "marginal_ppf",
    "marginal_moments",
    "auto_support",
]


@dataclass(frozen=True)
class Support:
    lo: float
    hi: float = math.inf

    def __post_init__(self):
        if not math.isfinite(self.lo):
            raise ValueError("support lower bound must be finite")
        if not self.lo < self.hi:
            raise ValueError(f"empty support [{self.lo}, {self.hi}]")

    @property
    def bounded(self) -> bool:
        return math.isfinite(self.hi)

    @property
    def width(self) -> float:
        return self.hi - self.lo

    def __str__(self) -> str:
        return f"{self.lo:.9g},{self.hi:.9g}"

    @classmethod
    def parse(cls, text: str) -> "Support":
        lo, hi = (float(p) for p in text.split(","))
        return cls(lo, hi)


def auto_support(values: Sequence[float]) -> Support:
    """Default support policy.

    ``[0, 2 max]`` for nonnegative data, otherwise
    ``[min - range, max + range]``.
    """
    v = np.asarray(values, dtype=float)
    lo, hi = float(v.min()), float(v.max())
    if lo >= 0 and hi > 0:
        return Support(0.0, 2.0 * hi)
    span = hi - lo if hi > lo else max(abs(hi), 1.0)
    return Support(lo - span, hi + span)


# --- truncated-exponential closed forms on [0, L] --------------------------

def _log_h(a: float) -> float:
    """``log((1 - exp(-a)) / a)``, the log normalizer per unit width."""
    if abs(a) < 1e-8:
        return -a / 2.0 + a * a / 24.0
    if a > 0:
        return math.log(-math.expm1(-a)) - math.log(a)
    b = -a
    # (exp(b) - 1) / b
    return b + math.log1p(-math.exp(-b)) - math.log(b)


def _mean_frac(a: float) -> float:
    """Mean of the density proportional to exp(-a s) on s in [0, 1]."""
    if abs(a) < 0.05:
        a2 = a * a
        return 0.5 - a / 12.0 + a * a2 * (1.0 / 720.0 - a2 / 30240.0 + a2 * a2 / 1209600.0)
    if a > 0:
        return 1.0 / a - math.exp(-a) / (-math.expm1(-a))
    return 1.0 - _mean_frac(-a)


def _var_frac(a: float) -> float:
    """Variance of the density proportional to exp(-a s) on s in [0, 1]."""
    a = abs(a)
    if a < 0.1:
        a2 = a * a
        return 1.0 / 12.0 - a2 / 240.0 + a2 * a2 / 6048.0 - a2 ** 3 / 172800.0
    e = math.exp(-a)
    return 1.0 / (a * a) - e / (math.expm1(-a) ** 2)


@dataclass(frozen=True)
class MaxEntMarginal:
    """Fitted density ``exp(-lambda0 - lambda1 x)`` on ``support``."""

    support: Support
    lambda0: float
    lambda1: float
    target_mean: float

    def to_dict(self, prefix: str = "") -> dict:
        return {
            f"{prefix}support_lo": self.support.lo,
            f"{prefix}support_hi": self.support.hi,
            f"{prefix}lambda0": self.lambda0,
            f"{prefix}lambda1": self.lambda1,
            f"{prefix}mean": self.target_mean,
        }


def _lambda0(lam1: float, sup: Support) -> float:
    # lambda0 = log Z with Z = integral of exp(-lam1 x) over the support
    if not sup.bounded:
        return -lam1 * sup.lo - math.log(lam1)
    L = sup.width
    return -lam1 * sup.lo + math.log(L) + _log_h(lam1 * L)


def fit_marginal(mean: float, support: Support, cfg: SolverConfig = SolverConfig()) -> MaxEntMarginal:
    """Maximum-entropy density on ``support`` with the given mean.

    Examples
    --------
    >>> m = fit_marginal(0.53845, Support(0.0))
    >>> round(m.lambda1, 6)
    1.857182
    """
    lo, hi = support.lo, support.hi
    if not (lo < mean < hi):
        raise InfeasibleMean(f"mean {mean:.9g} is not inside the open support ({lo:.9g}, {hi:.9g})")
    if not support.bounded:
        lam1 = 1.0 / (mean - lo)
        return MaxEntMarginal(support, _lambda0(lam1, support), lam1, float(mean))

    L = support.width
    target = (mean - lo) / L  # mean fraction in (0, 1)

    # dual in a = lambda1 * L: phi(a) = log h(a) + a * target
    def objective(a):
        a0 = float(a[0])
        val = _log_h(a0) + a0 * target
        grad = target - _mean_frac(a0)
        return val, np.array([grad]), np.array([[_var_frac(a0)]])

    tol_cfg = SolverConfig(cfg.max_iterations, min(cfg.residual_tolerance, 1e-12), cfg.damping_floor)
    res = newton_minimize(objective, [0.0], tol_cfg)
    lam1 = float(res.x[0]) / L
    return MaxEntMarginal(support, _lambda0(lam1, support), lam1, float(mean))


def marginal_logpdf(m: MaxEntMarginal, x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    inside = (x >= m.support.lo) & (x <= m.support.hi)
    with np.errstate(over="ignore", invalid="ignore"):
        out = np.where(inside, -m.lambda0 - m.lambda1 * x, -np.inf)
    return out


def marginal_pdf(m: MaxEntMarginal, x) -> np.ndarray | float:
    """Density value, zero outside the support."""
    out = np.exp(marginal_logpdf(m, x))
    return float(out) if out.ndim == 0 else out


def marginal_cdf(m: MaxEntMarginal, x) -> np.ndarray | float:
    """Closed-form CDF, clamped to [0, 1]."""
    xa = np.asarray(x, dtype=float)
    lo, hi, lam = m.support.lo, m.support.hi, m.lambda1
    s = np.clip(xa, lo, hi) - lo
    if not m.support.bounded:
        out = -np.expm1(-lam * s)
    else:
        L = hi - lo
        a = lam * L
        if abs(a) < 1e-12:
            out = s / L
        elif lam > 0:
            out = np.expm1(-lam * s) / math.expm1(-a)
        else:
            b = -lam
            out = np.exp(-b * (L - s)) * np.expm1(-b * s) / math.expm1(-b * L)
    out = np.clip(out, 0.0, 1.0)
    return float(out) if out.ndim == 0 else out


def _upper_bracket(m: MaxEntMarginal) -> float:
    if m.support.bounded:
        return m.support.hi
    # exponential tail: cdf = 1 - 2^-60 at this point
    return m.support.lo + 60.0 * math.log(2.0) / m.lambda1


def marginal_ppf(m: MaxEntMarginal, p, tol: float = 1e-12) -> np.ndarray | float:
    """Inverse CDF by vectorized bisection on :func:`marginal_cdf`.

    ``tol`` is relative to the bracket width (absolute for unit-scale
    supports).
    """
    pa = np.asarray(p, dtype=float)
    a = np.full(pa.shape, m.support.lo)
    b = np.full(pa.shape, _upper_bracket(m))
    width = float(b.flat[0] - a.flat[0]) if pa.size else 0.0
    abs_tol = tol * max(1.0, width)
    n_iter = int(math.ceil(math.log2(max(width, abs_tol) / abs_tol))) + 1
    for _ in range(n_iter):
        mid = 0.5 * (a + b)
        below = marginal_cdf(m, mid) < pa
        a = np.where(below, mid, a)
        b = np.where(below, b, mid)
    out = 0.5 * (a + b)
    return float(out) if out.ndim == 0 else out


def marginal_moments(m: MaxEntMarginal) -> Tuple[float, float]:
    """Closed-form mean and variance of the fitted density."""
    lo, lam = m.support.lo, m.lambda1
    if not m.support.bounded:
        return lo + 1.0 / lam, 1.0 / (lam * lam)
    L = m.support.width
    a = lam * L
    return lo + L * _mean_frac(a), L * L * _var_frac(a)
