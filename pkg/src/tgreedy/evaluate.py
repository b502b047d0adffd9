"""
AUROC and the leave-one-domain-out source/target curve harness.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, List, Mapping, Optional, Sequence

import numpy as np
from scipy.stats import rankdata

from .exceptions import ValidationError
from .moments import DomainCollection, LabeledSampleSet, compute_domain_moments
from .select import SelectionTrace, StopRule, run_selection


@dataclass(frozen=True)
class CurveSeries:
    steps: np.ndarray
    source_auroc: np.ndarray
    target_auroc: np.ndarray
    t_values: np.ndarray
    label: str = ""

    def __post_init__(self):
        arrs = [np.asarray(a, dtype=float) for a in
                (self.steps, self.source_auroc, self.target_auroc, self.t_values)]
        if len({a.size for a in arrs}) != 1:
            raise ValidationError("curve series columns have different lengths")
        for a in arrs[1:3]:
            if np.any((a < 0) | (a > 1)):
                raise ValidationError("AUROC values must lie in [0, 1]")
        object.__setattr__(self, "steps", arrs[0].astype(int))
        object.__setattr__(self, "source_auroc", arrs[1])
        object.__setattr__(self, "target_auroc", arrs[2])
        object.__setattr__(self, "t_values", arrs[3])

    def gap(self) -> np.ndarray:
        """Source minus target AUROC per step."""
        return self.source_auroc - self.target_auroc


@dataclass(frozen=True)
class ExperimentPlan:
    domain_ids: tuple
    held_out: str
    method: str
    steps: int
    source_test_fraction: float = 0.5

    def __post_init__(self):
        if self.held_out not in self.domain_ids:
            raise ValidationError(f"held-out domain {self.held_out!r} is not in the plan")
        if not 0 < self.source_test_fraction < 1:
            raise ValidationError("source_test_fraction must lie in (0, 1)")

    @property
    def training_ids(self) -> tuple:
        return tuple(d for d in self.domain_ids if d != self.held_out)


@dataclass
class LooResult:
    method: str
    series: List[CurveSeries]
    average: CurveSeries
    traces: Dict[str, SelectionTrace] = field(default_factory=dict)


def binarize(labels) -> np.ndarray:
    """Map labels to +/-1; positive values are the positive class."""
    labels = np.asarray(labels, dtype=float)
    return np.where(labels > 0, 1.0, -1.0)


def auroc(scores, labels) -> float:
    """Mann-Whitney AUROC with ties counted one half.

    ``labels`` are +/-1 (any positive value counts as positive).
    """
    scores = np.asarray(scores, dtype=float).reshape(-1)
    pos = np.asarray(labels, dtype=float).reshape(-1) > 0
    if scores.shape != pos.shape:
        raise ValidationError("scores and labels differ in length")
    n_pos = int(pos.sum())
    n_neg = pos.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise ValidationError("AUROC needs at least one positive and one negative label")
    ranks = rankdata(scores, method="average")
    u = ranks[pos].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


def balance(samples: LabeledSampleSet, rng: np.random.Generator) -> LabeledSampleSet:
    """Downsample the majority class so both classes are equally frequent."""
    pos = np.flatnonzero(binarize(samples.labels) > 0)
    neg = np.flatnonzero(binarize(samples.labels) < 0)
    k = min(pos.size, neg.size)
    if k == 0:
        raise ValidationError("cannot balance a single-class sample set")
    keep = np.sort(np.concatenate([rng.choice(pos, k, replace=False) if pos.size > k else pos,
                                   rng.choice(neg, k, replace=False) if neg.size > k else neg]))
    return samples.subset(keep)


def evaluate_trace(trace: SelectionTrace, source_eval: LabeledSampleSet,
                   target_eval: LabeledSampleSet, label: str = "") -> CurveSeries:
    """AUROC of every prefix of ``trace`` on the source and target sets.

    Step 0 is the all-zero model, which scores exactly 0.5 on both sets.
    """
    for name, s in (("source", source_eval), ("target", target_eval)):
        if s.n_features != trace.n_features:
            raise ValidationError(
                f"{name} set has {s.n_features} features, trace has {trace.n_features}"
            )
    W = trace.prefix_weights()
    src = source_eval.features @ W.T
    tgt = target_eval.features @ W.T
    ys, yt = binarize(source_eval.labels), binarize(target_eval.labels)
    k = W.shape[0]
    t = np.array([np.nan] + [s.t_value for s in trace.steps])
    return CurveSeries(
        np.arange(k),
        np.array([auroc(src[:, j], ys) for j in range(k)]),
        np.array([auroc(tgt[:, j], yt) for j in range(k)]),
        t,
        label or trace.method,
    )


def average_series(series: Sequence[CurveSeries], label: str = "average") -> CurveSeries:
    """Pointwise arithmetic mean over series truncated to the shortest one."""
    if not series:
        raise ValidationError("nothing to average")
    k = min(s.steps.size for s in series)
    stack = lambda attr: np.mean([getattr(s, attr)[:k] for s in series], axis=0)
    return CurveSeries(series[0].steps[:k], stack("source_auroc"), stack("target_auroc"),
                       stack("t_values"), label)


def split_domain(samples: LabeledSampleSet, fraction: float, rng: np.random.Generator):
    """Random (train, test) split with ``fraction`` of the rows in the test part."""
    n = samples.n_samples
    n_test = int(round(fraction * n))
    if n_test < 1 or n_test >= n:
        raise ValidationError(f"split fraction {fraction} leaves an empty part of {n} rows")
    perm = rng.permutation(n)
    return samples.subset(np.sort(perm[n_test:])), samples.subset(np.sort(perm[:n_test]))


def _concat(sets: Sequence[LabeledSampleSet]) -> LabeledSampleSet:
    return LabeledSampleSet(np.vstack([s.features for s in sets]),
                            np.concatenate([s.labels for s in sets]))


def run_plan(plan: ExperimentPlan, domains: Mapping[str, LabeledSampleSet], seed: int,
             stop: Optional[StopRule] = None, balanced: bool = True):
    """Train on the plan's source domains, evaluate on source test split and held-out domain."""
    order = list(plan.domain_ids)
    train_moments, source_tests = [], []
    for did in plan.training_ids:
        rng = np.random.default_rng([seed, order.index(did)])
        train, test = split_domain(domains[did], plan.source_test_fraction, rng)
        train_moments.append(compute_domain_moments(train, did))
        source_tests.append(test)
    collection = DomainCollection.from_domains(train_moments)
    stop = stop or StopRule("max_steps", plan.steps)
    trace = run_selection(collection, plan.method, stop)
    source_eval = _concat(source_tests)
    target_eval = domains[plan.held_out]
    if balanced:
        brng = np.random.default_rng([seed, len(order), order.index(plan.held_out)])
        source_eval = balance(source_eval, brng)
        target_eval = balance(target_eval, brng)
    curve = evaluate_trace(trace, source_eval, target_eval,
                           label=f"{plan.method}:{plan.held_out}")
    return trace, curve


def loo_experiment(all_domains: Mapping[str, LabeledSampleSet], method: str, steps: int,
                   seed: int = 0, source_test_fraction: float = 0.5,
                   balanced: bool = True) -> LooResult:
    """Cycle the held-out domain through every domain and average the curves."""
    ids = tuple(all_domains)
    if len(ids) < 3:
        raise ValidationError("leave-one-domain-out needs at least 3 domains")
    series, traces = [], {}
    for held in ids:
        plan = ExperimentPlan(ids, held, method, steps, source_test_fraction)
        trace, curve = run_plan(plan, all_domains, seed, balanced=balanced)
        series.append(curve)
        traces[held] = trace
    return LooResult(method, series, average_series(series, f"{method}:average"), traces)
