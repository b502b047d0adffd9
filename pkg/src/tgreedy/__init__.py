"""Stagewise feature selection that generalizes to unseen domains."""

__version__ = "0.1.0"

from .exceptions import RankDeficientError, ValidationError
from .moments import (
    DomainCollection,
    DomainMoments,
    LabeledSampleSet,
    compute_domain_moments,
    normalize_features,
    pair_features,
    pooled_gram,
    residual_cross_cov,
)
from .tstats import (
    FeatureStats,
    SubsetBasis,
    confidence_width,
    orthonormal_basis,
    per_feature_stats,
    subset_regret_bound,
    t_statistic,
    t_tilde_sq,
)
from .select import SelectionTrace, StopRule, greedy_step, run_selection, t_greedy_step
from .evaluate import CurveSeries, auroc, evaluate_trace, loo_experiment
from .bounds import SymmetricDistSpec, mc_exceedance, self_norm_tail, theorem1_coverage_sim
from .synth import SynthConfig, default_contrast_config, gen_domains
