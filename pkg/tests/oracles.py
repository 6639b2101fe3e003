"""Independent reference computations used by the tests.

Nothing here calls into the package's numerical kernels; each oracle is a
brute-force or closed-form evaluation.
"""
from __future__ import annotations

import itertools

import numpy as np


def brute_ranks(a):
    """O(n^2) indicator-count ranks ``#{i : a_i <= a_t}``."""
    a = np.asarray(a)
    return (a[None, :] <= a[:, None]).sum(axis=1)


def spearman_brute(x, y):
    """Pearson correlation of the brute-force rank vectors."""
    r = brute_ranks(x).astype(float)
    s = brute_ranks(y).astype(float)
    r -= r.mean()
    s -= s.mean()
    return float((r * s).sum() / np.sqrt((r * r).sum() * (s * s).sum()))


def fgm_moment(theta, a, b):
    """``E[U^a V^b]`` under the FGM copula ``1 + theta (1-2u)(1-2v)``.

    ``int u^a (1 - 2u) du = 1/(a+1) - 2/(a+2)``.
    """
    k = lambda p: 1.0 / (p + 1) - 2.0 / (p + 2)
    return 1.0 / ((a + 1) * (b + 1)) + theta * k(a) * k(b)


def fgm_feature_targets(theta, r=5):
    """Targets of ``(u^i + v^i, uv, u^2 v + u v^2, u^2 v^2)`` under FGM."""
    out = [2.0 * fgm_moment(theta, i, 0) for i in range(1, r + 1)]
    out += [fgm_moment(theta, 1, 1), 2.0 * fgm_moment(theta, 2, 1), fgm_moment(theta, 2, 2)]
    return np.array(out)


def permutation_average(fn, n):
    """Average of ``fn(x, y)`` over every permutation y of 1..n with x = 1..n."""
    x = np.arange(1.0, n + 1)
    vals = [np.asarray(fn(x, np.array(p, dtype=float))) for p in itertools.permutations(x)]
    return np.mean(vals, axis=0)


def mc_exponential_t2(n, seed, mu=(1.0, 1.0), chunk=1_000_000):
    """T^2 with identity inverse covariance for independent unit exponentials."""
    rng = np.random.default_rng(seed)
    out = np.empty(n)
    for s in range(0, n, chunk):
        k = min(chunk, n - s)
        z = rng.exponential(size=(k, 2))
        out[s:s + k] = (z[:, 0] - mu[0]) ** 2 + (z[:, 1] - mu[1]) ** 2
    return out


def grid_integrals(logpdf, lo, hi, n=1_000_001):
    """Trapezoid normalization, mean and variance of ``exp(logpdf)`` on [lo, hi]."""
    x = np.linspace(lo, hi, n)
    f = np.exp(logpdf(x))
    z = np.trapezoid(f, x)
    m = np.trapezoid(x * f, x) / z
    v = np.trapezoid((x - m) ** 2 * f, x) / z
    return z, m, v
