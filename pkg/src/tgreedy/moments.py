"""
Per-domain second-order statistics.

Selection and bound computations never touch raw samples. Everything they
need is carried by three moments per domain: the cross-covariance vector
``E[X Y | d]``, the Gram matrix ``E[X X^T | d]`` and ``E[Y^2 | d]``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence, Tuple

import numpy as np

from .exceptions import ValidationError

SYMMETRY_RTOL = 1e-9
PSD_RTOL = 1e-8
DEAD_FEATURE_THRESHOLD = 1e-12
# above this many rows, moments are accumulated blockwise and tree-summed
PAIRWISE_THRESHOLD = 10_000
_BLOCK_ROWS = 4096


def _check_symmetric_psd(mat: np.ndarray, what: str) -> None:
    if mat.ndim != 2 or mat.shape[0] != mat.shape[1]:
        raise ValidationError(f"{what} must be square, got shape {mat.shape}")
    if not np.all(np.isfinite(mat)):
        raise ValidationError(f"{what} has non-finite entries")
    scale = max(float(np.max(np.abs(mat))), np.finfo(float).tiny)
    asym = float(np.max(np.abs(mat - mat.T)))
    if asym > SYMMETRY_RTOL * scale:
        raise ValidationError(f"{what} is not symmetric (max asymmetry {asym:.3e})")
    if mat.shape[0] == 0:
        return
    eig = np.linalg.eigvalsh(0.5 * (mat + mat.T))
    if eig[0] < -PSD_RTOL * max(eig[-1], 0.0):
        raise ValidationError(
            f"{what} is not positive semidefinite (min eigenvalue {eig[0]:.3e})"
        )


@dataclass(frozen=True)
class LabeledSampleSet:
    """Raw samples for one domain.

    Parameters
    ----------
    features : ndarray of shape (N, p)
    labels : ndarray of shape (N,)
        Regression targets, or +/-1 for classification-style tasks.
    """

    features: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        X = np.array(self.features, dtype=np.float64, copy=True)
        y = np.array(self.labels, dtype=np.float64, copy=True).reshape(-1)
        if X.ndim == 1:
            X = X.reshape(1, -1) if y.size == 1 else X.reshape(-1, 1)
        if X.ndim != 2:
            raise ValidationError(f"features must be 2-D, got shape {X.shape}")
        if X.shape[0] < 1:
            raise ValidationError("sample set is empty")
        if X.shape[0] != y.shape[0]:
            raise ValidationError(
                f"{X.shape[0]} feature rows but {y.shape[0]} labels"
            )
        bad = ~np.isfinite(X).all(axis=1) | ~np.isfinite(y)
        if bad.any():
            row = int(np.flatnonzero(bad)[0])
            raise ValidationError(f"non-finite value in sample row {row}")
        X.setflags(write=False)
        y.setflags(write=False)
        object.__setattr__(self, "features", X)
        object.__setattr__(self, "labels", y)

    @property
    def n_samples(self) -> int:
        return self.features.shape[0]

    @property
    def n_features(self) -> int:
        return self.features.shape[1]

    def subset(self, rows) -> "LabeledSampleSet":
        rows = np.asarray(rows)
        return LabeledSampleSet(self.features[rows], self.labels[rows])


@dataclass(frozen=True)
class DomainMoments:
    """Sufficient statistics of one domain."""

    domain_id: str
    cross_cov: np.ndarray
    gram: np.ndarray
    second_y: float
    sample_count: int

    def __post_init__(self):
        c = np.array(self.cross_cov, dtype=np.float64, copy=True).reshape(-1)
        G = np.array(self.gram, dtype=np.float64, copy=True)
        if G.ndim != 2 or G.shape != (c.size, c.size):
            raise ValidationError(
                f"domain {self.domain_id!r}: gram shape {G.shape} does not match "
                f"cross_cov length {c.size}"
            )
        if not np.all(np.isfinite(c)):
            raise ValidationError(f"domain {self.domain_id!r}: non-finite cross_cov")
        _check_symmetric_psd(G, f"domain {self.domain_id!r} gram")
        second_y = float(self.second_y)
        if not np.isfinite(second_y) or second_y < 0:
            raise ValidationError(f"domain {self.domain_id!r}: second_y must be >= 0")
        count = int(self.sample_count)
        if count < 1:
            raise ValidationError(f"domain {self.domain_id!r}: sample_count must be >= 1")
        c.setflags(write=False)
        G.setflags(write=False)
        object.__setattr__(self, "domain_id", str(self.domain_id))
        object.__setattr__(self, "cross_cov", c)
        object.__setattr__(self, "gram", G)
        object.__setattr__(self, "second_y", second_y)
        object.__setattr__(self, "sample_count", count)

    @property
    def dim(self) -> int:
        return self.cross_cov.size

    def loss(self, w) -> float:
        """Mean squared residual ``E[(Y - w.X)^2 | d]`` reconstructed from moments."""
        w = np.asarray(w, dtype=np.float64)
        return float(w @ self.gram @ w - 2.0 * w @ self.cross_cov + self.second_y)


@dataclass(frozen=True)
class DomainCollection:
    """Moments of all training domains plus the pooled input Gram matrix.

    ``active`` marks features eligible for selection; features whose pooled
    second moment is numerically zero are switched off by
    :func:`normalize_features`.
    """

    domains: Tuple[DomainMoments, ...]
    pooled_gram: np.ndarray
    feature_names: Tuple[str, ...] = ()
    active: Optional[np.ndarray] = None

    def __post_init__(self):
        domains = tuple(self.domains)
        if not domains:
            raise ValidationError("collection needs at least one domain")
        p = domains[0].dim
        for d in domains:
            if d.dim != p:
                raise ValidationError(
                    f"domain {d.domain_id!r} has dimension {d.dim}, expected {p}"
                )
        G = np.array(self.pooled_gram, dtype=np.float64, copy=True)
        if G.shape != (p, p):
            raise ValidationError(f"pooled_gram shape {G.shape}, expected {(p, p)}")
        _check_symmetric_psd(G, "pooled_gram")
        names = tuple(self.feature_names) or tuple(f"f{i}" for i in range(p))
        if len(names) != p:
            raise ValidationError(f"{len(names)} feature names for {p} features")
        if self.active is None:
            active = np.ones(p, dtype=bool)
        else:
            active = np.array(self.active, dtype=bool, copy=True).reshape(-1)
            if active.size != p:
                raise ValidationError("active mask length does not match dimension")
        G.setflags(write=False)
        active.setflags(write=False)
        object.__setattr__(self, "domains", domains)
        object.__setattr__(self, "pooled_gram", G)
        object.__setattr__(self, "feature_names", names)
        object.__setattr__(self, "active", active)

    @classmethod
    def from_domains(cls, domains: Sequence[DomainMoments], feature_names=(),
                     pooled: Optional[np.ndarray] = None) -> "DomainCollection":
        """Build a collection, pooling the domain Grams unless ``pooled`` is given."""
        domains = tuple(domains)
        if pooled is None:
            pooled = pooled_gram(domains)
        return cls(domains, pooled, tuple(feature_names))

    @property
    def n_domains(self) -> int:
        return len(self.domains)

    @property
    def dim(self) -> int:
        return self.domains[0].dim

    def cross_covs(self) -> np.ndarray:
        """Stacked cross-covariances, shape (n_domains, p)."""
        return np.stack([d.cross_cov for d in self.domains])

    def grams(self) -> np.ndarray:
        """Stacked Gram matrices, shape (n_domains, p, p)."""
        return np.stack([d.gram for d in self.domains])

    def mean_second_moments(self) -> np.ndarray:
        """Unweighted domain average of ``E[X_i^2 | d]``."""
        return np.mean([np.diag(d.gram) for d in self.domains], axis=0)

    def train_loss(self, w) -> float:
        """Domain-averaged squared loss, the quantity greedy selection decreases."""
        return float(np.mean([d.loss(w) for d in self.domains]))


def _tree_sum(parts: list) -> np.ndarray:
    while len(parts) > 1:
        nxt = [parts[i] + parts[i + 1] for i in range(0, len(parts) - 1, 2)]
        if len(parts) % 2:
            nxt.append(parts[-1])
        parts = nxt
    return parts[0]


def compute_domain_moments(samples: LabeledSampleSet, domain_id: str) -> DomainMoments:
    """Sample-mean estimates of ``E[XY|d]``, ``E[XX^T|d]`` and ``E[Y^2|d]``."""
    if not isinstance(samples, LabeledSampleSet):
        samples = LabeledSampleSet(*samples)
    X, y = samples.features, samples.labels
    N = X.shape[0]
    if N > PAIRWISE_THRESHOLD:
        blocks = range(0, N, _BLOCK_ROWS)
        xy = _tree_sum([X[s:s + _BLOCK_ROWS].T @ y[s:s + _BLOCK_ROWS] for s in blocks])
        xx = _tree_sum([X[s:s + _BLOCK_ROWS].T @ X[s:s + _BLOCK_ROWS] for s in blocks])
        yy = float(np.sum(y * y))  # numpy's contiguous sum is already pairwise
    else:
        xy = X.T @ y
        xx = X.T @ X
        yy = float(y @ y)
    gram = 0.5 * (xx + xx.T) / N
    return DomainMoments(domain_id, xy / N, gram, yy / N, N)


def pooled_gram(domains: Sequence[DomainMoments]) -> np.ndarray:
    """Sample-count weighted average of the domain Gram matrices."""
    domains = list(domains)
    if not domains:
        raise ValidationError("cannot pool an empty list of domains")
    p = domains[0].dim
    total = 0
    acc = np.zeros((p, p))
    for d in domains:
        if d.dim != p:
            raise ValidationError(
                f"domain {d.domain_id!r} has dimension {d.dim}, expected {p}"
            )
        acc += d.sample_count * d.gram
        total += d.sample_count
    acc /= total
    return 0.5 * (acc + acc.T)


def normalize_features(collection: DomainCollection) -> Tuple[DomainCollection, np.ndarray]:
    """Rescale every feature to unit pooled second moment.

    Returns
    -------
    normalized : DomainCollection
        Collection in the rescaled coordinates. Dead features (pooled
        second moment below ``DEAD_FEATURE_THRESHOLD``) keep scale 1 and are
        marked inactive.
    scale : ndarray of shape (p,)
        Multiplier applied to each feature; ``x_new = scale * x_old``.
    """
    diag = np.diag(collection.pooled_gram)
    live = (diag >= DEAD_FEATURE_THRESHOLD) & collection.active
    if not live.any():
        raise ValidationError("every feature is dead (pooled second moment ~ 0)")
    scale = np.ones_like(diag)
    scale[live] = 1.0 / np.sqrt(diag[live])
    outer = np.outer(scale, scale)
    domains = tuple(
        DomainMoments(d.domain_id, d.cross_cov * scale, d.gram * outer,
                      d.second_y, d.sample_count)
        for d in collection.domains
    )
    pooled = collection.pooled_gram * outer
    # exact unit diagonal; off-diagonal already consistent
    idx = np.flatnonzero(live)
    pooled[idx, idx] = 1.0
    return DomainCollection(domains, pooled, collection.feature_names, live), scale


def residual_cross_cov(d: DomainMoments, w) -> np.ndarray:
    """``E[X_i (Y - w.X) | d]`` for every feature, from moments alone."""
    w = np.asarray(w, dtype=np.float64).reshape(-1)
    if w.size != d.dim:
        raise ValidationError(f"weight length {w.size} does not match dimension {d.dim}")
    return d.cross_cov - d.gram @ w


def pair_features(set_a: LabeledSampleSet, set_b: LabeledSampleSet, plan) -> LabeledSampleSet:
    """Similarity-learning features: elementwise products of paired rows.

    ``plan`` is an iterable of ``(index_a, index_b, label)`` triples with
    label +1 for a same-class pair and -1 otherwise.
    """
    if set_a.n_features != set_b.n_features:
        raise ValidationError(
            f"feature dimensions differ: {set_a.n_features} vs {set_b.n_features}"
        )
    plan = [tuple(t) for t in plan]
    if not plan:
        raise ValidationError("pairing plan is empty")
    ia = np.array([t[0] for t in plan], dtype=np.int64)
    ib = np.array([t[1] for t in plan], dtype=np.int64)
    labels = np.array([t[2] for t in plan], dtype=np.float64)
    for name, idx, n in (("a", ia, set_a.n_samples), ("b", ib, set_b.n_samples)):
        bad = (idx < 0) | (idx >= n)
        if bad.any():
            k = int(np.flatnonzero(bad)[0])
            raise ValidationError(f"pair {k}: index_{name}={idx[k]} out of range [0, {n})")
    if not np.all(np.isin(labels, (-1.0, 1.0))):
        raise ValidationError("pair labels must be +1 or -1")
    return LabeledSampleSet(set_a.features[ia] * set_b.features[ib], labels)
