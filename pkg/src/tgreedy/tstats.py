"""
Cross-domain T-statistics and the data-dependent confidence bounds built on them.

The unit of sampling is a domain: each training domain contributes one
covariance ``E[X_i (Y - w.X) | d_k]`` per feature, and the statistics below
treat those ``n`` numbers as a small sample.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import List, NamedTuple, Sequence

import numpy as np

from .exceptions import RankDeficientError, ValidationError
from .moments import DomainCollection, residual_cross_cov

RANK_RTOL = 1e-10


@dataclass(frozen=True)
class FeatureStats:
    mu_hat: float
    sigma_hat: float
    t_value: float
    n_domains: int


class ConfidenceWidth(NamedTuple):
    width: float
    theorem_precondition_ok: bool


class SubsetBound(NamedTuple):
    bound: float
    corollary_precondition_ok: bool


@dataclass(frozen=True)
class SubsetBasis:
    """Orthonormalizing transform for a feature subset.

    ``transform`` maps subset coordinates to an orthonormal basis:
    ``transform.T @ source_gram @ transform == I``.
    """

    subset: tuple
    transform: np.ndarray
    source_gram: np.ndarray


def t_statistic(mu: float, sigma: float, n: int) -> float:
    """``mu / (sigma / sqrt(n))`` with the zero-variance conventions.

    ``sigma == 0`` gives ``+/-inf`` for nonzero ``mu`` and 0 for ``mu == 0``.
    """
    if n < 2:
        raise ValidationError(f"need n >= 2 domains, got {n}")
    if sigma < 0:
        raise ValidationError(f"sigma must be >= 0, got {sigma}")
    if sigma == 0:
        return 0.0 if mu == 0 else math.copysign(math.inf, mu)
    return mu / (sigma / math.sqrt(n))


def t_values(mu: np.ndarray, sigma: np.ndarray, n: int) -> np.ndarray:
    """Vectorized :func:`t_statistic`."""
    mu = np.asarray(mu, dtype=np.float64)
    sigma = np.asarray(sigma, dtype=np.float64)
    with np.errstate(divide="ignore", invalid="ignore"):
        t = mu / (sigma / math.sqrt(n))
    zero = sigma == 0
    t[zero] = np.where(mu[zero] == 0, 0.0, np.copysign(np.inf, mu[zero]))
    return t


def domain_stats(covs: np.ndarray):
    """Mean, unbiased standard deviation and T over the leading (domain) axis."""
    covs = np.asarray(covs, dtype=np.float64)
    n = covs.shape[0]
    if n < 2:
        raise ValidationError(f"need at least 2 domains for a variance, got {n}")
    mu = covs.mean(axis=0)
    sigma = covs.std(axis=0, ddof=1)
    # identical values across domains: exact mean, exactly zero spread
    const = np.all(covs == covs[:1], axis=0)
    mu = np.where(const, covs[0], mu)
    sigma = np.where(const, 0.0, sigma)
    return mu, sigma, t_values(np.atleast_1d(mu), np.atleast_1d(sigma), n)


def residual_covariances(collection: DomainCollection, w) -> np.ndarray:
    """Per-domain residual covariances, shape (n_domains, p)."""
    return np.stack([residual_cross_cov(d, w) for d in collection.domains])


def per_feature_stats(collection: DomainCollection, w) -> List[FeatureStats]:
    n = collection.n_domains
    if n < 2:
        raise ValidationError(f"need at least 2 domains for a variance, got {n}")
    mu, sigma, t = domain_stats(residual_covariances(collection, w))
    return [FeatureStats(float(m), float(s), float(v), n) for m, s, v in zip(mu, sigma, t)]


def t_tilde_sq(t_sq: float, n: int) -> float:
    """Self-normalized ratio ``(sum Z)^2 / sum Z^2`` expressed through ``T^2``."""
    if n < 2:
        raise ValidationError(f"need n >= 2, got {n}")
    if not (t_sq >= 0 and math.isfinite(t_sq)):
        raise ValidationError(f"t_sq must be finite and >= 0, got {t_sq}")
    return (n / (n - 1)) * t_sq / (1.0 + t_sq / (n - 1))


def _check_delta(delta: float) -> None:
    if not 0 < delta < 1:
        raise ValidationError(f"delta must lie in (0, 1), got {delta}")


def confidence_width(sigma_hat: float, n: int, family_size: int, delta: float) -> ConfidenceWidth:
    """Simultaneous half-width for ``|mu_hat - E[X_i Y]|`` over a feature family.

    The width ``sigma_hat / sqrt(n) * sqrt(4 log(2|F|/delta))`` is returned
    even when ``|F| > (delta/2) exp(n/8)``; the flag reports whether the
    guarantee actually applies.
    """
    if n < 2:
        raise ValidationError(f"need n >= 2, got {n}")
    if family_size < 1:
        raise ValidationError(f"family_size must be >= 1, got {family_size}")
    if sigma_hat < 0:
        raise ValidationError(f"sigma_hat must be >= 0, got {sigma_hat}")
    _check_delta(delta)
    width = sigma_hat / math.sqrt(n) * math.sqrt(4.0 * math.log(2.0 * family_size / delta))
    ok = math.log(family_size) <= math.log(delta / 2.0) + n / 8.0
    return ConfidenceWidth(width, ok)


def subset_regret_bound(variances: Sequence[float], q: int, p: int, n: int,
                        delta: float) -> SubsetBound:
    """Excess-loss bound for the estimated weights on any size-``q`` subset.

    The precondition ``q p^q <= (delta/2) e^{n/8}`` is compared in log space.
    """
    variances = np.asarray(variances, dtype=np.float64).reshape(-1)
    if q < 1 or p < 2 or n < 2:
        raise ValidationError(f"need q >= 1, p >= 2, n >= 2; got q={q}, p={p}, n={n}")
    _check_delta(delta)
    if variances.size != q:
        raise ValidationError(f"{variances.size} variances for a subset of size {q}")
    if np.any(variances < 0) or not np.all(np.isfinite(variances)):
        raise ValidationError("variances must be finite and >= 0")
    total = float(np.sum(variances))
    bound = total * (8.0 * q * math.log(p) + math.log(2.0 / delta)) / n
    ok = math.log(q) + q * math.log(p) <= math.log(delta / 2.0) + n / 8.0
    return SubsetBound(bound, ok)


def orthonormal_basis(gram_S, subset=None) -> SubsetBasis:
    """Upper-triangular ``B`` with ``B^T G B = I`` via the Cholesky factor of ``G``.

    The factorization is deterministic, so repeated calls are bit-identical.
    """
    G = np.asarray(gram_S, dtype=np.float64)
    if G.ndim != 2 or G.shape[0] != G.shape[1] or G.shape[0] == 0:
        raise ValidationError(f"gram_S must be a nonempty square matrix, got {G.shape}")
    if np.max(np.abs(G - G.T)) > 1e-9 * max(np.max(np.abs(G)), 1e-300):
        raise ValidationError("gram_S is not symmetric")
    G = 0.5 * (G + G.T)
    eig = np.linalg.eigvalsh(G)
    if eig[0] <= RANK_RTOL * eig[-1]:
        raise RankDeficientError(
            f"gram_S is rank deficient: eigenvalue {eig[0]:.3e} <= "
            f"{RANK_RTOL:g} * {eig[-1]:.3e}; drop collinear features",
            float(eig[0]),
        )
    L = np.linalg.cholesky(G)
    q = G.shape[0]
    # B = L^{-T}
    B = np.linalg.solve(L, np.eye(q)).T
    if subset is None:
        subset = tuple(range(q))
    return SubsetBasis(tuple(int(i) for i in subset), B, G)


def subset_stats(collection: DomainCollection, subset: Sequence[int], delta: float = 0.05):
    """Per-direction stats in the orthonormal basis of ``subset`` and its regret bound.

    Returns ``(basis, mu_hat, sigma_hat, SubsetBound)``; ``mu_hat`` are the
    estimated weights on the orthonormal directions. The basis is built from
    the collection's pooled Gram matrix.
    """
    subset = [int(i) for i in subset]
    idx = np.array(subset)
    basis = orthonormal_basis(collection.pooled_gram[np.ix_(idx, idx)], subset)
    covs = collection.cross_covs()[:, idx] @ basis.transform
    mu, sigma, _ = domain_stats(covs)
    bound = subset_regret_bound(sigma ** 2, len(subset), max(collection.dim, 2),
                                collection.n_domains, delta)
    return basis, mu, sigma, bound
