"""Seedable random sampling for every distribution the synthesizers need.

All samplers take an explicit :class:`RngStream`; identical (seed, stream)
pairs reproduce identical sequences.  Standard scalar distributions
delegate to numpy's Generator; the inverse-Wishart sampler is built here
via the Bartlett decomposition so near-singular draws are never inverted
directly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg, stats

__all__ = [
    "ParameterDomainError",
    "RngStream",
    "sample_laplace",
    "sample_beta",
    "sample_dirichlet",
    "sample_gamma",
    "sample_inv_gamma",
    "sample_binomial",
    "sample_multinomial",
    "sample_bernoulli",
    "sample_normal",
    "sample_mvnormal",
    "sample_wishart",
    "sample_inv_wishart",
    "t_quantile",
]


class ParameterDomainError(ValueError):
    """A distribution parameter is outside its domain."""


@dataclass
class RngStream:
    """A value-like, splittable RNG stream.

    The underlying generator is keyed by (seed, stream path); substreams
    derived through :meth:`substream` are statistically independent and do
    not require coordination between workers.
    """

    seed: int
    stream: tuple[int, ...] = ()
    _gen: np.random.Generator | None = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        if isinstance(self.stream, int):
            self.stream = (self.stream,)

    @property
    def generator(self) -> np.random.Generator:
        if self._gen is None:
            seq = np.random.SeedSequence(entropy=self.seed, spawn_key=self.stream)
            self._gen = np.random.Generator(np.random.PCG64(seq))
        return self._gen

    def substream(self, *path: int) -> "RngStream":
        """A fresh independent stream derived from this one's identity."""
        return RngStream(self.seed, self.stream + tuple(path))


def _check_positive(name, value):
    if not np.all(np.asarray(value) > 0):
        raise ParameterDomainError(f"{name} must be positive, got {value}")


def sample_laplace(rng: RngStream, location, scale, size=None):
    _check_positive("scale", scale)
    return rng.generator.laplace(location, scale, size=size)


def sample_beta(rng: RngStream, a, b, size=None):
    _check_positive("a", a)
    _check_positive("b", b)
    return rng.generator.beta(a, b, size=size)


def sample_dirichlet(rng: RngStream, alpha):
    alpha = np.asarray(alpha, dtype=float)
    _check_positive("alpha", alpha)
    return rng.generator.dirichlet(alpha)


def sample_gamma(rng: RngStream, shape, rate=1.0, size=None):
    _check_positive("shape", shape)
    _check_positive("rate", rate)
    return rng.generator.gamma(shape, 1.0 / rate, size=size)


def sample_inv_gamma(rng: RngStream, shape, scale, size=None):
    """Inverse-Gamma(shape, scale): 1/X with X ~ Gamma(shape, rate=scale)."""
    _check_positive("shape", shape)
    _check_positive("scale", scale)
    return 1.0 / rng.generator.gamma(shape, 1.0 / scale, size=size)


def sample_binomial(rng: RngStream, n, p, size=None):
    if not (0 <= p <= 1):
        raise ParameterDomainError(f"p must be in [0,1], got {p}")
    return rng.generator.binomial(n, p, size=size)


def sample_multinomial(rng: RngStream, n, pvals):
    pvals = np.asarray(pvals, dtype=float)
    if np.any(pvals < 0) or not math.isclose(pvals.sum(), 1.0, abs_tol=1e-9):
        raise ParameterDomainError("pvals must be nonnegative and sum to 1")
    return rng.generator.multinomial(n, pvals / pvals.sum())


def sample_bernoulli(rng: RngStream, p, size=None):
    if not (0 <= p <= 1):
        raise ParameterDomainError(f"p must be in [0,1], got {p}")
    return (rng.generator.random(size) < p).astype(np.int64)


def sample_normal(rng: RngStream, mean, sd, size=None):
    _check_positive("sd", sd)
    return rng.generator.normal(mean, sd, size=size)


def sample_mvnormal(rng: RngStream, mean, cov, size=None):
    mean = np.asarray(mean, dtype=float)
    cov = np.asarray(cov, dtype=float)
    if not np.allclose(cov, cov.T, atol=1e-10):
        raise ParameterDomainError("covariance must be symmetric")
    eigs = np.linalg.eigvalsh(cov)
    if eigs.min() < -1e-10 * max(1.0, eigs.max()):
        raise ParameterDomainError("covariance must be positive semi-definite")
    return rng.generator.multivariate_normal(mean, cov, size=size,
                                             method="eigh")


def _bartlett_factor(rng: RngStream, dof: float, p: int) -> np.ndarray:
    """Lower-triangular Bartlett factor A with W = A A' ~ Wishart(dof, I)."""
    a = np.zeros((p, p))
    gen = rng.generator
    for i in range(p):
        a[i, i] = math.sqrt(gen.chisquare(dof - i))
    rows, cols = np.tril_indices(p, -1)
    a[rows, cols] = gen.standard_normal(len(rows))
    return a


def sample_wishart(rng: RngStream, dof: float, scale: np.ndarray) -> np.ndarray:
    scale = np.asarray(scale, dtype=float)
    p = scale.shape[0]
    if dof <= p - 1:
        raise ParameterDomainError(f"Wishart dof must exceed p-1={p - 1}")
    chol = np.linalg.cholesky(scale)
    la = chol @ _bartlett_factor(rng, dof, p)
    return la @ la.T


def sample_inv_wishart(rng: RngStream, dof: float, scale: np.ndarray) -> np.ndarray:
    """Inverse-Wishart(dof, scale) via Bartlett decomposition.

    Draws W ~ Wishart(dof, scale^{-1}) as (LA)(LA)' with L the Cholesky
    factor of scale^{-1}, then returns W^{-1} through triangular solves
    (no dense inverse of the draw itself).
    """
    scale = np.asarray(scale, dtype=float)
    p = scale.shape[0]
    if dof <= p - 1:
        raise ParameterDomainError(f"Inv-Wishart dof must exceed p-1={p - 1}")
    if not np.allclose(scale, scale.T, atol=1e-8 * max(1.0, abs(scale).max())):
        raise ParameterDomainError("scale must be symmetric")
    # L L' = scale^{-1} without forming the inverse: L = chol(scale)^{-T}
    chol_scale = np.linalg.cholesky(scale)
    l_inv = linalg.solve_triangular(chol_scale, np.eye(p), lower=True)
    factor = l_inv.T @ _bartlett_factor(rng, dof, p)  # W = factor factor'
    # W^{-1} = factor^{-T} factor^{-1}
    finv = np.linalg.inv(factor)
    draw = finv.T @ finv
    return 0.5 * (draw + draw.T)


def t_quantile(p: float, df: float) -> float:
    """Inverse CDF of Student-t; df = inf gives the normal quantile."""
    if not (0 < p < 1):
        raise ParameterDomainError(f"p must be in (0,1), got {p}")
    if df != math.inf and df <= 0:
        raise ParameterDomainError(f"df must be positive, got {df}")
    if math.isinf(df):
        return float(stats.norm.ppf(p))
    return float(stats.t.ppf(p, df))
