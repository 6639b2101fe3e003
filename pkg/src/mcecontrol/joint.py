"""Sklar composition of two maxent marginals with a copula density.

``f(x, y) = c(F_X(x), F_Y(y)) f_X(x) f_Y(y)``. Samples are drawn by
rejection on the unit square (uniform proposals, constant envelope) and
mapped through the marginal inverse CDFs.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .copula import CopulaDensity, copula_logpdf, copula_pdf, independence_copula
from .errors import EnvelopeExceeded
from .marginal import (
    MaxEntMarginal,
    Support,
    fit_marginal,
    marginal_cdf,
    marginal_logpdf,
    marginal_ppf,
)
from .numerics import gauss_legendre
from .ranks import BivariateSample

__all__ = [
    "JointModel",
    "RandomStream",
    "CopulaSampler",
    "JointSampler",
    "joint_pdf",
    "sample_joint",
    "sample_copula",
    "independent_baseline",
]

CHUNK = 1 << 15


@dataclass(frozen=True)
class JointModel:
    margin_x: MaxEntMarginal
    margin_y: MaxEntMarginal
    copula: CopulaDensity


@dataclass(frozen=True)
class RandomStream:
    """Reproducible random stream keyed by ``(seed, stream_id)``."""

    seed: int
    stream_id: int = 0

    def generator(self, *sub: int) -> np.random.Generator:
        ss = np.random.SeedSequence(int(self.seed) & (2 ** 64 - 1), spawn_key=(int(self.stream_id),) + tuple(sub))
        return np.random.Generator(np.random.PCG64(ss))

    def child(self, stream_id: int) -> "RandomStream":
        return RandomStream(self.seed, stream_id)


def independent_baseline(mean_x: float, mean_y: float, support_x: Support, support_y: Support, r: int = 5) -> JointModel:
    """Joint maxent density under the two mean constraints only.

    With no cross-moment constraint the maximum-entropy joint density is
    the product of the marginal fits, i.e. the independence copula. Used
    as a comparison baseline.
    """
    return JointModel(fit_marginal(mean_x, support_x), fit_marginal(mean_y, support_y), independence_copula(r))


def joint_pdf(m: JointModel, x, y):
    """Joint density; zero outside the support rectangle."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    lx = marginal_logpdf(m.margin_x, x)
    ly = marginal_logpdf(m.margin_y, y)
    u = marginal_cdf(m.margin_x, x)
    v = marginal_cdf(m.margin_y, y)
    lc = copula_logpdf(m.copula, u, v)
    with np.errstate(invalid="ignore"):
        out = np.exp(lc + lx + ly)
    out = np.where(np.isfinite(lx) & np.isfinite(ly), out, 0.0)
    return float(out) if out.ndim == 0 else out


def _envelope(c: CopulaDensity) -> float:
    rule = gauss_legendre(64)
    u, v, _ = rule.tensor()
    grid = np.linspace(0.0, 1.0, 257)
    gu, gv = np.meshgrid(grid, grid, indexing="ij")
    mx = max(float(np.max(copula_logpdf(c, u, v))), float(np.max(copula_logpdf(c, gu, gv))))
    # local refinement around the best grid cell
    i, j = np.unravel_index(np.argmax(copula_logpdf(c, gu, gv)), gu.shape)
    fine = np.linspace(-1.0 / 256, 1.0 / 256, 65)
    fu = np.clip(grid[i] + fine, 0, 1)
    fv = np.clip(grid[j] + fine, 0, 1)
    fu, fv = np.meshgrid(fu, fv, indexing="ij")
    mx = max(mx, float(np.max(copula_logpdf(c, fu, fv))))
    return 1.1 * math.exp(mx)


class CopulaSampler:
    """Rejection sampler on the unit square with a cached envelope."""

    def __init__(self, c: CopulaDensity, envelope: Optional[float] = None):
        self.copula = c
        self.envelope = envelope if envelope is not None else _envelope(c)

    def copula_draws(self, n: int, gen: np.random.Generator) -> np.ndarray:
        """``n`` draws from the copula; returns an (n, 2) array of (u, v)."""
        c = self.copula
        for _ in range(4):
            M = self.envelope
            out = []
            have = 0
            exceeded = False
            while have < n:
                k = max(64, int(1.2 * (n - have) * M) + 16)
                uv = gen.random((k, 2))
                dens = copula_pdf(c, uv[:, 0], uv[:, 1])
                if np.any(dens > M):
                    exceeded = True
                    break
                keep = uv[gen.random(k) * M < dens]
                out.append(keep)
                have += keep.shape[0]
            if not exceeded:
                return np.concatenate(out)[:n]
            warnings.warn(f"copula density exceeded envelope {M:.6g}; doubling", EnvelopeExceeded, stacklevel=2)
            self.envelope = 2.0 * M
        raise EnvelopeExceeded(f"envelope still exceeded after 3 doublings (M={self.envelope:.6g})")


class JointSampler(CopulaSampler):
    """Copula rejection sampler followed by marginal inverse CDFs."""

    def __init__(self, m: JointModel, envelope: Optional[float] = None):
        super().__init__(m.copula, envelope)
        self.model = m

    def draw(self, n: int, gen: np.random.Generator) -> np.ndarray:
        uv = self.copula_draws(n, gen)
        x = marginal_ppf(self.model.margin_x, uv[:, 0])
        y = marginal_ppf(self.model.margin_y, uv[:, 1])
        return np.column_stack([x, y])


def sample_copula(c: CopulaDensity, n: int, rng: RandomStream) -> np.ndarray:
    """(n, 2) draws of ``(u, v)`` from the copula density."""
    sampler = CopulaSampler(c)
    return np.concatenate(
        [sampler.copula_draws(min(CHUNK, n - s), rng.generator(k)) for k, s in enumerate(range(0, n, CHUNK))]
    )


def sample_joint(m: JointModel, n: int, rng: RandomStream, workers: int = 1) -> BivariateSample:
    """``n`` i.i.d. draws from the joint model.

    The request is split into fixed-size chunks, each with its own
    sub-stream of ``rng``; chunks are concatenated in order, so the output
    does not depend on ``workers``.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    sampler = JointSampler(m)
    starts = list(range(0, n, CHUNK))

    def job(k):
        return sampler.draw(min(CHUNK, n - starts[k]), rng.generator(k))

    if workers > 1 and len(starts) > 1:
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor(max_workers=workers) as ex:
            parts = list(ex.map(job, range(len(starts))))
    else:
        parts = [job(k) for k in range(len(starts))]
    xy = np.concatenate(parts)
    return BivariateSample(xy[:, 0], xy[:, 1])
