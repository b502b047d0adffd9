"""
Stagewise feature selection: classical greedy and T-greedy.

Both methods share the same additive update. At each step the chosen
coordinate ``i`` receives ``mu_hat_i / E_hat[X_i^2]`` where ``mu_hat_i`` is
the domain-averaged residual covariance. They differ only in how ``i`` is
picked: greedy maximizes the training-loss decrease ``mu_hat_i^2 / E_hat[X_i^2]``,
T-greedy maximizes the cross-domain T-statistic of the residual covariance.
Features may be picked more than once.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import List, Optional, Tuple

import numpy as np

from .exceptions import ValidationError
from .moments import DEAD_FEATURE_THRESHOLD, DomainCollection, DomainMoments
from .tstats import domain_stats, residual_covariances

METHODS = ("greedy", "t_greedy")
STOP_KINDS = ("max_steps", "t_threshold", "bonferroni")
# residual covariances below this (relative to the largest raw covariance) count as zero
RESIDUAL_ATOL = 1e-12


@dataclass(frozen=True)
class StepRecord:
    step: int
    feature: int
    method: str
    t_value: float
    mu_hat: float
    sigma_hat: float
    weight_delta: float
    train_loss: float


@dataclass
class SelectionState:
    weights: np.ndarray
    chosen: List[int] = field(default_factory=list)
    step_log: List[StepRecord] = field(default_factory=list)

    @classmethod
    def initial(cls, p: int) -> "SelectionState":
        return cls(np.zeros(p))


@dataclass(frozen=True)
class StopRule:
    """When to end a selection run.

    ``max_steps`` caps every rule. ``t_threshold`` additionally stops once the
    selected T falls below ``threshold``; ``bonferroni`` stops once the
    selected ``T^2`` falls below ``4 log(2 p k / delta)`` at step ``k``.
    """

    kind: str = "max_steps"
    max_steps: int = 30
    threshold: float = 0.0
    delta: float = 0.05

    def __post_init__(self):
        if self.kind not in STOP_KINDS:
            raise ValidationError(f"unknown stop rule {self.kind!r}; choose from {STOP_KINDS}")
        if self.max_steps < 0:
            raise ValidationError("max_steps must be >= 0")
        if self.kind == "bonferroni" and not 0 < self.delta < 1:
            raise ValidationError("bonferroni stop needs 0 < delta < 1")

    def bonferroni_cutoff(self, p: int, step: int) -> float:
        return 4.0 * math.log(2.0 * p * step / self.delta)


@dataclass(frozen=True)
class SelectionTrace:
    method: str
    n_features: int
    steps: Tuple[StepRecord, ...]
    weights: np.ndarray
    stop_reason: str
    initial_loss: float = float("nan")

    @property
    def chosen(self) -> List[int]:
        return [s.feature for s in self.steps]

    def __len__(self):
        return len(self.steps)

    def weights_at(self, k: int) -> np.ndarray:
        """Weight vector after the first ``k`` steps."""
        w = np.zeros(self.n_features)
        for s in self.steps[:k]:
            w[s.feature] += s.weight_delta
        return w

    def prefix_weights(self) -> np.ndarray:
        """All prefix weight vectors, shape (len + 1, p); row 0 is all zeros."""
        out = np.zeros((len(self.steps) + 1, self.n_features))
        for k, s in enumerate(self.steps, start=1):
            out[k] = out[k - 1]
            out[k, s.feature] += s.weight_delta
        return out


class StopSelection(Exception):
    """Raised by a step when no feature carries residual signal."""


def _second_moments(collection: DomainCollection, population: Optional[np.ndarray]):
    if population is not None:
        population = np.asarray(population, dtype=np.float64).reshape(-1)
        if population.size != collection.dim:
            raise ValidationError("population second-moment vector has wrong length")
        return population
    return collection.mean_second_moments()


def _candidates(collection, denom):
    return collection.active & (denom >= DEAD_FEATURE_THRESHOLD)


def _residual_stats(collection, state):
    covs = residual_covariances(collection, state.weights)
    scale = max(float(np.max(np.abs(collection.cross_covs()))), 1.0)
    covs[np.abs(covs) <= RESIDUAL_ATOL * scale] = 0.0
    return domain_stats(covs)


def _apply(collection, state, i, mu, sigma, t, denom, method):
    delta = float(mu[i] / denom[i])
    w = state.weights.copy()
    w[i] += delta
    rec = StepRecord(len(state.step_log) + 1, int(i), method, float(t[i]),
                     float(mu[i]), float(sigma[i]), delta, collection.train_loss(w))
    return SelectionState(w, state.chosen + [int(i)], state.step_log + [rec])


def _pick_t_greedy(mu, sigma, t, ok):
    undefined = (sigma == 0) & (mu == 0)
    live = ok & ~undefined
    if not live.any():
        raise StopSelection("no residual signal: all T undefined")
    # lexicographic max over (T, |mu|, -index)
    idx = np.flatnonzero(live)
    order = np.lexsort((idx, -np.abs(mu[idx]), -t[idx]))
    return int(idx[order[0]])


def _pick_greedy(mu, sigma, denom, ok):
    undefined = (sigma == 0) & (mu == 0)
    live = ok & ~undefined
    if not live.any():
        raise StopSelection("no residual signal: all residual covariances zero")
    gain = np.full(mu.shape, -np.inf)
    gain[live] = mu[live] ** 2 / denom[live]
    return int(np.argmax(gain))  # first maximal index on ties


def t_greedy_step(collection: DomainCollection, state: SelectionState,
                  population_second_moments=None) -> SelectionState:
    """One T-greedy step; raises :class:`StopSelection` when nothing is left."""
    if collection.n_domains < 2:
        raise ValidationError("T-greedy needs at least 2 domains")
    denom = _second_moments(collection, population_second_moments)
    ok = _candidates(collection, denom)
    mu, sigma, t = _residual_stats(collection, state)
    i = _pick_t_greedy(mu, sigma, t, ok)
    return _apply(collection, state, i, mu, sigma, t, denom, "t_greedy")


def greedy_step(collection: DomainCollection, state: SelectionState,
                population_second_moments=None) -> SelectionState:
    """One classical greedy step (largest decrease of domain-averaged training loss)."""
    if collection.n_domains < 2:
        raise ValidationError("greedy selection needs at least 2 domains")
    denom = _second_moments(collection, population_second_moments)
    ok = _candidates(collection, denom)
    mu, sigma, t = _residual_stats(collection, state)
    i = _pick_greedy(mu, sigma, denom, ok)
    return _apply(collection, state, i, mu, sigma, t, denom, "greedy")


_STEPS = {"greedy": greedy_step, "t_greedy": t_greedy_step}


def run_selection(collection: DomainCollection, method: str = "t_greedy",
                  stop: Optional[StopRule] = None,
                  population_second_moments=None) -> SelectionTrace:
    """Iterate ``method`` until ``stop`` fires.

    Parameters
    ----------
    population_second_moments : array-like, optional
        Population ``E[X_i^2]`` to use in the weight update instead of the
        training-domain average (the unbiased variant).
    """
    if method not in _STEPS:
        raise ValidationError(f"unknown method {method!r}; choose from {METHODS}")
    if collection.n_domains < 2:
        raise ValidationError("selection needs at least 2 domains")
    stop = stop or StopRule()
    step = _STEPS[method]
    p = collection.dim
    state = SelectionState.initial(p)
    reason = "max_steps"
    while len(state.chosen) < stop.max_steps:
        try:
            nxt = step(collection, state, population_second_moments)
        except StopSelection as exc:
            reason = str(exc)
            break
        rec = nxt.step_log[-1]
        if stop.kind == "t_threshold" and rec.t_value < stop.threshold:
            reason = f"t_threshold: T={rec.t_value:.4g} < {stop.threshold:g}"
            break
        if stop.kind == "bonferroni":
            cutoff = stop.bonferroni_cutoff(p, rec.step)
            if rec.t_value ** 2 < cutoff:
                reason = f"bonferroni: T^2={rec.t_value ** 2:.4g} < {cutoff:.4g}"
                break
        state = nxt
    return SelectionTrace(method, p, tuple(state.step_log), state.weights, reason,
                          collection.train_loss(np.zeros(p)))


def permute_collection(collection: DomainCollection, perm) -> DomainCollection:
    """Reorder features; new feature ``j`` is old feature ``perm[j]``."""
    perm = np.asarray(perm)
    domains = [DomainMoments(d.domain_id, d.cross_cov[perm], d.gram[np.ix_(perm, perm)],
                             d.second_y, d.sample_count) for d in collection.domains]
    return DomainCollection(tuple(domains), collection.pooled_gram[np.ix_(perm, perm)],
                            tuple(collection.feature_names[j] for j in perm),
                            collection.active[perm])
