"""
Synthetic multi-domain regression data with known robust/spurious structure.

Domain ``d`` draws ``Y = beta_d . X + eps`` with independent standard normal
``X`` (optionally equicorrelated) and ``eps ~ N(0, noise_sd^2)``. The
coefficient of a robust feature is the same in every domain; a spurious
feature gets ``spurious_mean + spurious_boost * u`` with ``u`` drawn from a
distribution symmetric about zero, independently per domain; noise features
have coefficient zero everywhere. With identity input covariance this makes
``E[X_i Y | d] = beta_{d,i}``, and ``E[XY|d] - E[XY]`` symmetric.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from typing import Dict, List, Tuple

import numpy as np

from .exceptions import ValidationError
from .moments import LabeledSampleSet

FLIP_KINDS = ("rademacher", "uniform", "gaussian")


@dataclass(frozen=True)
class SynthConfig:
    p_robust: int = 5
    p_spurious: int = 50
    p_noise: int = 200
    n_domains: int = 8
    samples_per_domain: int = 2000
    robust_signal: float = 0.3
    spurious_mean: float = 0.05
    spurious_boost: float = 0.6
    spurious_flip: str = "rademacher"
    noise_sd: float = 1.0
    correlation: float = 0.0
    seed: int = 0

    def __post_init__(self):
        for name in ("p_robust", "p_spurious", "p_noise", "n_domains", "samples_per_domain"):
            if getattr(self, name) < 0:
                raise ValidationError(f"{name} must be >= 0")
        if self.p_robust + self.p_spurious + self.p_noise < 1:
            raise ValidationError("config needs at least one feature")
        if self.n_domains < 1 or self.samples_per_domain < 1:
            raise ValidationError("need at least one domain and one sample per domain")
        if self.spurious_flip not in FLIP_KINDS:
            raise ValidationError(f"spurious_flip must be one of {FLIP_KINDS}")
        if self.noise_sd < 0 or self.spurious_boost < 0:
            raise ValidationError("noise_sd and spurious_boost must be >= 0")
        if not 0 <= self.correlation < 1:
            raise ValidationError("correlation must lie in [0, 1)")

    @property
    def n_features(self) -> int:
        return self.p_robust + self.p_spurious + self.p_noise

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, sort_keys=True)

    @classmethod
    def from_dict(cls, data: dict) -> "SynthConfig":
        unknown = set(data) - set(cls.__dataclass_fields__)
        if unknown:
            raise ValidationError(f"unknown synth config keys: {sorted(unknown)}")
        return cls(**data)


@dataclass(frozen=True)
class SynthTruth:
    robust_indices: List[int]
    spurious_indices: List[int]
    noise_indices: List[int]
    beta_bar: np.ndarray
    domain_betas: Dict[str, np.ndarray] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "robust_indices": list(self.robust_indices),
            "spurious_indices": list(self.spurious_indices),
            "noise_indices": list(self.noise_indices),
            "beta_bar": [float(b) for b in self.beta_bar],
            "domain_betas": {k: [float(b) for b in v] for k, v in self.domain_betas.items()},
        }


def default_contrast_config(seed: int = 0) -> SynthConfig:
    """Canonical setting in which greedy overfits to spurious features.

    Pooled spurious covariance (0.05) is below the robust one (0.3), but any
    single domain sees a spurious covariance of 0.65 or -0.55.
    """
    return SynthConfig(seed=seed)


def symmetric_perturbation(kind: str, rng: np.random.Generator, size) -> np.ndarray:
    """Unit-scale draws symmetric about zero."""
    if kind == "rademacher":
        return rng.choice(np.array([-1.0, 1.0]), size=size)
    if kind == "uniform":
        return rng.uniform(-1.0, 1.0, size=size)
    if kind == "gaussian":
        return rng.standard_normal(size)
    raise ValidationError(f"unknown perturbation kind {kind!r}")


def domain_ids(n: int) -> List[str]:
    return [f"d{k}" for k in range(n)]


def gen_domains(config: SynthConfig) -> Tuple[Dict[str, LabeledSampleSet], SynthTruth]:
    """Draw every domain of ``config``; deterministic given ``config.seed``."""
    p = config.n_features
    robust = list(range(config.p_robust))
    spurious = list(range(config.p_robust, config.p_robust + config.p_spurious))
    noise = list(range(config.p_robust + config.p_spurious, p))
    beta_bar = np.zeros(p)
    beta_bar[robust] = config.robust_signal
    beta_bar[spurious] = config.spurious_mean

    root = np.random.SeedSequence(config.seed)
    coef_seq, *dom_seqs = root.spawn(config.n_domains + 1)
    coef_rng = np.random.default_rng(coef_seq)
    flips = symmetric_perturbation(config.spurious_flip, coef_rng,
                                   (config.n_domains, config.p_spurious))

    ids = domain_ids(config.n_domains)
    data, betas = {}, {}
    rho = config.correlation
    for k, (did, seq) in enumerate(zip(ids, dom_seqs)):
        rng = np.random.default_rng(seq)
        beta = beta_bar.copy()
        beta[spurious] += config.spurious_boost * flips[k]
        N = config.samples_per_domain
        X = rng.standard_normal((N, p))
        if rho > 0:
            common = rng.standard_normal((N, 1))
            X = np.sqrt(1.0 - rho) * X + np.sqrt(rho) * common
        y = X @ beta + config.noise_sd * rng.standard_normal(N)
        data[did] = LabeledSampleSet(X, y)
        betas[did] = beta
    return data, SynthTruth(robust, spurious, noise, beta_bar, betas)
