"""
Tail bound for self-normalized sums and Monte Carlo checks of it.

For independent symmetric ``Z_1..Z_n`` the ratio ``(sum Z)^2 / sum Z^2``
exceeds ``t`` with probability at most ``2 exp(-t/2)``, with no moment
assumptions. The theorem is often quoted without the leading 2; the
symmetrization + Hoeffding argument only supports the constant 2, so that
is the certified bound here and the constant-1 curve is reported alongside
for comparison only.

Random streams are PCG64 generators derived from ``SeedSequence(seed)``,
one child per fixed-size chunk of trials, so results do not depend on the
number of worker threads.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .exceptions import ValidationError
from .tstats import confidence_width

DIST_KINDS = ("gaussian", "rademacher", "cauchy_symmetric", "two_point_scaled")
CHUNK_TRIALS = 1 << 16
SLACK_SIGMAS = 3.0
COVERAGE_CHUNK_CELLS = 1 << 22


@dataclass(frozen=True)
class SymmetricDistSpec:
    """A distribution symmetric about zero.

    ``two_point_scaled`` takes values ``+/- scale * (i + 1)`` for coordinate
    ``i``: independent but not identically distributed.
    """

    kind: str = "gaussian"
    scale: float = 1.0

    def __post_init__(self):
        if self.kind not in DIST_KINDS:
            raise ValidationError(f"unknown distribution {self.kind!r}; choose from {DIST_KINDS}")
        if not (self.scale > 0 and math.isfinite(self.scale)):
            raise ValidationError("scale must be a positive finite number")

    def sample(self, rng: np.random.Generator, size) -> np.ndarray:
        if self.kind == "gaussian":
            return self.scale * rng.standard_normal(size)
        if self.kind == "cauchy_symmetric":
            return self.scale * rng.standard_cauchy(size)
        signs = rng.integers(0, 2, size=size, dtype=np.int8) * 2.0 - 1.0
        if self.kind == "rademacher":
            return self.scale * signs
        mags = self.scale * np.arange(1, size[-1] + 1, dtype=float)
        return signs * mags


@dataclass(frozen=True)
class ExceedanceReport:
    t_grid: np.ndarray
    empirical_freq: np.ndarray
    bound_value: np.ndarray
    trials: int
    seed: int
    n: int = 0
    dist: str = ""
    max_ratio: float = 0.0

    @property
    def statement_bound(self) -> np.ndarray:
        """``exp(-t/2)``, the constant-1 form, for comparison only."""
        return np.exp(-self.t_grid / 2.0)

    @property
    def slack(self) -> np.ndarray:
        b = np.minimum(self.bound_value, 1.0)
        return SLACK_SIGMAS * np.sqrt(b * (1.0 - b) / self.trials)

    @property
    def ceiling_ok(self) -> bool:
        return self.max_ratio <= self.n * (1.0 + 1e-12)

    @property
    def passed(self) -> bool:
        ok = self.empirical_freq <= np.minimum(self.bound_value, 1.0) + self.slack
        return bool(np.all(ok) and self.ceiling_ok)


@dataclass(frozen=True)
class CoverageReport:
    n: int
    family_size: int
    delta: float
    trials: int
    seed: int
    violations: int
    dist: str

    @property
    def violation_rate(self) -> float:
        return self.violations / self.trials

    @property
    def limit(self) -> float:
        return self.delta + SLACK_SIGMAS * math.sqrt(self.delta * (1 - self.delta) / self.trials)

    @property
    def passed(self) -> bool:
        return self.violation_rate <= self.limit


def self_norm_tail(t: float) -> float:
    """Certified bound ``2 exp(-t/2)`` on ``P[(sum Z)^2 / sum Z^2 > t]``."""
    if not t > 0:
        raise ValidationError(f"t must be > 0, got {t}")
    return 2.0 * math.exp(-t / 2.0)


def self_norm_ratio(Z: np.ndarray) -> np.ndarray:
    """Row-wise ``(sum Z)^2 / sum Z^2``; all-zero rows give 0."""
    s = Z.sum(axis=-1)
    q = np.einsum("...i,...i->...", Z, Z)
    out = np.zeros_like(s)
    nz = q > 0
    out[nz] = s[nz] ** 2 / q[nz]
    return out


def _chunks(trials: int, chunk: int):
    sizes = [chunk] * (trials // chunk)
    if trials % chunk:
        sizes.append(trials % chunk)
    return sizes


def _map_chunks(fn, trials, seed, threads, chunk=CHUNK_TRIALS):
    sizes = _chunks(trials, chunk)
    seqs = np.random.SeedSequence(seed).spawn(len(sizes))
    jobs = list(zip(sizes, seqs))
    if threads and threads > 1:
        with ThreadPoolExecutor(threads) as pool:
            return list(pool.map(lambda job: fn(*job), jobs))
    return [fn(*job) for job in jobs]


def mc_exceedance(dist: SymmetricDistSpec, n: int, t_grid: Sequence[float], trials: int,
                  seed: int, threads: Optional[int] = None) -> ExceedanceReport:
    """Monte Carlo frequency of ``(sum Z)^2 / sum Z^2 > t`` for each ``t``."""
    if not isinstance(dist, SymmetricDistSpec):
        raise ValidationError("dist must be a SymmetricDistSpec")
    if n < 2:
        raise ValidationError(f"n must be >= 2, got {n}")
    if trials < 1:
        raise ValidationError("trials must be >= 1")
    t = np.asarray(t_grid, dtype=float).reshape(-1)
    if t.size == 0 or np.any(t <= 0):
        raise ValidationError("t_grid must be nonempty with all t > 0")

    def run(size, seq):
        rng = np.random.default_rng(seq)
        r = self_norm_ratio(dist.sample(rng, (size, n)))
        return (r[:, None] > t[None, :]).sum(axis=0), float(r.max())

    parts = _map_chunks(run, trials, seed, threads)
    counts = np.sum([c for c, _ in parts], axis=0)
    return ExceedanceReport(t, counts / trials, 2.0 * np.exp(-t / 2.0), trials, seed,
                            n, dist.kind, max(m for _, m in parts))


def symmetrization_samples(dist: SymmetricDistSpec, n: int, trials: int, seed: int):
    """Ratios from fresh draws and from random sign flips of independent magnitudes.

    Symmetry means ``Z`` and ``eps * |Z|`` (Rademacher ``eps``) share a law, so
    the two returned samples should be indistinguishable.
    """
    fresh_seq, mag_seq, sign_seq = np.random.SeedSequence(seed).spawn(3)
    fresh = self_norm_ratio(dist.sample(np.random.default_rng(fresh_seq), (trials, n)))
    mags = np.abs(dist.sample(np.random.default_rng(mag_seq), (trials, n)))
    eps = np.random.default_rng(sign_seq).integers(0, 2, size=(trials, n)) * 2.0 - 1.0
    return fresh, self_norm_ratio(eps * mags)


def max_family_size(n: int, delta: float) -> int:
    """Largest ``|F|`` with ``|F| <= (delta/2) e^{n/8}``."""
    return int(math.floor(math.exp(math.log(delta / 2.0) + n / 8.0)))


def theorem1_coverage_sim(n: int, family_size: int, delta: float, trials: int, seed: int,
                          dist: SymmetricDistSpec = SymmetricDistSpec(),
                          means: Optional[Sequence[float]] = None,
                          noise_scale: float = 1.0,
                          threads: Optional[int] = None) -> CoverageReport:
    """Simulate simultaneous coverage of the per-feature confidence widths.

    Each trial draws ``n`` domain covariances ``m_i + noise`` for each of the
    ``family_size`` features and records whether any ``|mu_hat_i - m_i|``
    exceeds its width. ``noise_scale`` multiplies the draws from ``dist``;
    zero gives the noiseless case.
    """
    if n < 2 or family_size < 1 or trials < 1:
        raise ValidationError("need n >= 2, family_size >= 1, trials >= 1")
    if not 0 < delta < 1:
        raise ValidationError("delta must lie in (0, 1)")
    if not confidence_width(1.0, n, family_size, delta).theorem_precondition_ok:
        raise ValidationError(
            f"family_size {family_size} is outside the theorem's regime; "
            f"max admissible is {max_family_size(n, delta)}"
        )
    m = (np.linspace(-1.0, 1.0, family_size) if means is None
         else np.asarray(means, dtype=float).reshape(-1))
    if noise_scale < 0:
        raise ValidationError("noise_scale must be >= 0")
    if m.size != family_size:
        raise ValidationError("means length must equal family_size")
    radius = math.sqrt(4.0 * math.log(2.0 * family_size / delta)) / math.sqrt(n)

    def run(size, seq):
        rng = np.random.default_rng(seq)
        covs = m + noise_scale * dist.sample(rng, (size, n, family_size))
        dev = np.abs((covs - m).mean(axis=1))
        width = covs.std(axis=1, ddof=1) * radius
        return int(np.any(dev > width, axis=1).sum())

    chunk = max(1, COVERAGE_CHUNK_CELLS // (n * family_size))
    violations = sum(_map_chunks(run, trials, seed, threads, chunk))
    return CoverageReport(n, family_size, delta, trials, seed, violations, dist.kind)
