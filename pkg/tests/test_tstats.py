import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import collection_from_covs
from tgreedy import RankDeficientError, ValidationError
from tgreedy.moments import DomainCollection, DomainMoments
from tgreedy.tstats import (
    confidence_width,
    orthonormal_basis,
    per_feature_stats,
    subset_regret_bound,
    subset_stats,
    t_statistic,
    t_tilde_sq,
)


class TestPerFeatureStats:
    def test_zero_variance_gives_signed_infinity(self):
        (pos,), (neg,) = (per_feature_stats(collection_from_covs([[c]] * 3), [0.0])
                          for c in (0.7, -0.7))
        assert pos.sigma_hat == 0 and pos.t_value == math.inf and pos.mu_hat == 0.7
        assert neg.t_value == -math.inf

    def test_one_two_three(self):
        (s,) = per_feature_stats(collection_from_covs([[1.0], [2.0], [3.0]]), [0.0])
        assert s.mu_hat == pytest.approx(2.0)
        assert s.sigma_hat == pytest.approx(1.0)
        assert s.t_value == pytest.approx(2 * math.sqrt(3))
        assert s.n_domains == 3

    def test_antisymmetric(self):
        (s,) = per_feature_stats(collection_from_covs([[-1.3], [1.3]]), [0.0])
        assert s.mu_hat == 0 and s.t_value == 0

    def test_uses_residuals(self):
        coll = collection_from_covs([[1.0], [2.0], [3.0]])
        (s,) = per_feature_stats(coll, [2.0])
        assert s.mu_hat == pytest.approx(0.0)
        assert s.sigma_hat == pytest.approx(1.0)

    def test_needs_two_domains(self):
        with pytest.raises(ValidationError):
            per_feature_stats(collection_from_covs([[1.0]]), [0.0])

    def test_scale_invariance_exact_for_power_of_two(self, rng):
        covs = rng.normal(size=(6, 4))
        base = per_feature_stats(collection_from_covs(covs), np.zeros(4))
        c = np.array([2.0, 0.25, 8.0, 1.0])
        scaled = per_feature_stats(collection_from_covs(covs * c, c ** 2), np.zeros(4))
        assert [s.t_value for s in base] == [s.t_value for s in scaled]

    def test_scale_invariance_random(self, rng):
        covs = rng.normal(size=(6, 4))
        c = rng.uniform(0.1, 10, size=4)
        base = per_feature_stats(collection_from_covs(covs), np.zeros(4))
        scaled = per_feature_stats(collection_from_covs(covs * c, c ** 2), np.zeros(4))
        np.testing.assert_allclose([s.t_value for s in scaled], [s.t_value for s in base],
                                   rtol=1e-12)


class TestTStatistic:
    def test_values(self):
        assert t_statistic(2, 1, 3) == pytest.approx(2 * math.sqrt(3))
        assert t_statistic(0, 0, 5) == 0
        assert t_statistic(1, 0, 5) == math.inf

    def test_sign_matches_mu(self):
        assert t_statistic(-0.1, 2.0, 4) < 0

    def test_rejects(self):
        with pytest.raises(ValidationError):
            t_statistic(1, 1, 1)
        with pytest.raises(ValidationError):
            t_statistic(1, -1, 3)


def ratio_oracle(z):
    return z.sum() ** 2 / (z * z).sum()


def t_sq_of(z):
    n = z.size
    return (z.mean() / (z.std(ddof=1) / math.sqrt(n))) ** 2


class TestTTildeSq:
    def test_zero(self):
        assert t_tilde_sq(0.0, 5) == 0.0

    def test_one_two_three_both_routes(self):
        z = np.array([1.0, 2.0, 3.0])
        assert t_sq_of(z) == pytest.approx(12.0)
        assert t_tilde_sq(12.0, 3) == pytest.approx(18 / 7, rel=1e-14)
        assert ratio_oracle(z) == pytest.approx(18 / 7, rel=1e-14)

    def test_asymptote(self):
        assert t_tilde_sq(1e12, 7) == pytest.approx(7, abs=1e-6)

    @given(st.floats(0, 1e6), st.floats(0, 1e6), st.integers(2, 60))
    def test_monotone_and_bounded(self, a, b, n):
        lo, hi = sorted((a, b))
        assert t_tilde_sq(lo, n) <= t_tilde_sq(hi, n) <= n

    @settings(max_examples=200)
    @given(st.lists(st.floats(-100, 100, allow_subnormal=False), min_size=2, max_size=50))
    def test_identity_property(self, z):
        z = np.array(z)
        if np.ptp(z) < 1e-6 or np.sum(z * z) < 1e-6:
            return
        assert t_tilde_sq(t_sq_of(z), z.size) == pytest.approx(ratio_oracle(z), rel=1e-9)


class TestConfidenceWidth:
    def test_zero_sigma(self):
        assert confidence_width(0.0, 10, 5, 0.1).width == 0.0

    def test_reference_value(self):
        w = confidence_width(1.0, 200, 10, 0.1)
        assert w.width == pytest.approx(math.sqrt(4 * math.log(200)) / math.sqrt(200))
        assert w.width == pytest.approx(0.3256, abs=1e-4)
        assert w.theorem_precondition_ok

    def test_precondition_fails_but_width_returned(self):
        w = confidence_width(1.0, 8, 2000, 0.05)
        assert not w.theorem_precondition_ok
        assert w.width > 0

    @pytest.mark.parametrize("args", [(1, 1, 5, 0.1), (1, 5, 0, 0.1), (1, 5, 5, 1.0),
                                      (-1, 5, 5, 0.1)])
    def test_rejects(self, args):
        with pytest.raises(ValidationError):
            confidence_width(*args)


class TestSubsetRegretBound:
    def test_zero_variances(self):
        assert subset_regret_bound([0, 0, 0], 3, 10, 50, 0.1).bound == 0

    def test_reference_value(self):
        r = subset_regret_bound([0.2, 0.3], 2, 10, 100, 0.05)
        assert r.bound == pytest.approx(0.5 * (16 * math.log(10) + math.log(40)) / 100)
        assert r.bound == pytest.approx(0.2027, abs=1e-4)
        assert r.corollary_precondition_ok
        assert 200 <= 0.025 * math.exp(12.5)

    def test_huge_p_no_overflow(self):
        r = subset_regret_bound([1] * 5, 5, 1000, 10, 0.05)
        assert not r.corollary_precondition_ok
        assert math.log(5 * 1000.0 ** 5) > math.log(0.025) + 1.25

    def test_boundary_flip(self):
        q, p, n = 3, 20, 120
        delta_star = 2 * q * p ** q * math.exp(-n / 8)
        assert subset_regret_bound([1] * q, q, p, n, delta_star * (1 + 1e-9)).corollary_precondition_ok
        assert not subset_regret_bound([1] * q, q, p, n, delta_star * (1 - 1e-9)).corollary_precondition_ok

    @settings(max_examples=100)
    @given(st.lists(st.floats(0, 10), min_size=3, max_size=3), st.floats(0, 5),
           st.integers(2, 50), st.integers(3, 300), st.floats(0.01, 0.9))
    def test_monotonicity(self, var, bump, p, n, delta):
        base = subset_regret_bound(var, 3, p, n, delta).bound
        assert subset_regret_bound([var[0] + bump] + var[1:], 3, p, n, delta).bound >= base
        assert subset_regret_bound(var, 3, p + 1, n, delta).bound >= base
        assert subset_regret_bound(var, 3, p, n + 1, delta).bound <= base
        assert subset_regret_bound(var, 3, p, n, min(delta * 1.1, 0.99)).bound <= base
        assert subset_regret_bound(var + [0.0], 4, p, n, delta).bound >= base

    def test_rejects(self):
        with pytest.raises(ValidationError):
            subset_regret_bound([1, 1], 3, 10, 10, 0.1)
        with pytest.raises(ValidationError):
            subset_regret_bound([1], 1, 1, 10, 0.1)


class TestOrthonormalBasis:
    def test_identity(self):
        np.testing.assert_array_equal(orthonormal_basis(np.eye(3)).transform, np.eye(3))

    def test_diagonal(self):
        np.testing.assert_allclose(orthonormal_basis(np.diag([4.0, 9.0])).transform,
                                   np.diag([0.5, 1 / 3]), rtol=1e-15)

    def test_random_spd(self, rng):
        A = rng.normal(size=(4, 4))
        G = A @ A.T + 0.5 * np.eye(4)
        B = orthonormal_basis(G).transform
        assert np.max(np.abs(B.T @ G @ B - np.eye(4))) < 1e-10
        assert np.allclose(B, np.triu(B))

    def test_deterministic(self, rng):
        A = rng.normal(size=(5, 5))
        G = A @ A.T + np.eye(5)
        assert orthonormal_basis(G).transform.tobytes() == orthonormal_basis(G).transform.tobytes()

    def test_rank_deficient(self):
        G = np.array([[1.0, 1.0], [1.0, 1.0]])
        with pytest.raises(RankDeficientError) as info:
            orthonormal_basis(G)
        assert abs(info.value.eigenvalue) < 1e-12
        assert "eigenvalue" in str(info.value)


def test_subset_stats_in_orthonormal_basis(rng):
    A = rng.normal(size=(3, 3))
    G = A @ A.T + np.eye(3)
    beta = np.array([0.5, -0.2, 0.1])
    domains = [DomainMoments(f"d{k}", G @ (beta + 0.05 * rng.normal(size=3)), G, 1.0, 10)
               for k in range(6)]
    coll = DomainCollection.from_domains(domains)
    basis, mu, sigma, bound = subset_stats(coll, [0, 2])
    B = basis.transform
    assert np.max(np.abs(B.T @ G[np.ix_([0, 2], [0, 2])] @ B - np.eye(2))) < 1e-12
    covs = np.stack([d.cross_cov[[0, 2]] @ B for d in domains])
    np.testing.assert_allclose(mu, covs.mean(axis=0))
    np.testing.assert_allclose(sigma, covs.std(axis=0, ddof=1))
    assert bound.bound == pytest.approx(np.sum(sigma ** 2) * (16 * math.log(3) + math.log(40)) / 6)
