import math

import numpy as np
import pytest
from hypothesis import assume, given, settings, strategies as st
from scipy import stats

from itergauss.errors import DomainError, InvalidDimensionError
from itergauss.rotations import make_rng, make_spectrum, sample_haar
from itergauss.theory import (BOUND_KINDS, CovarianceState, amgm_bracket, apply_block_exact,
                              block_loss_update, coupling_rate, coupling_rate_limit,
                              coupling_required_layers, gaussian_kl,
                              gaussianization_required_layers, geometric_mean_from_loss,
                              iterative_rate_factor, kappa_upper_bound,
                              learned_rotation_lower_bound, loss_from_geometric_mean,
                              param_count_lower_bound, pythagorean_decomposition_gaussian,
                              spectrum_kl, theory_bounds)

spectra = st.lists(st.floats(1e-3, 1e3), min_size=2, max_size=30)


def random_cov(dim, seed, normalized=True):
    rng = make_rng(seed)
    s = make_spectrum(6, dim, rng=rng)
    sigma = s.covariance(sample_haar(dim, rng))
    return sigma if normalized else sigma * rng.uniform(0.3, 3.0)


def kl_oracle(sigma):
    # -H[p] plus the cross-entropy against N(0, I)
    d = sigma.shape[0]
    h = stats.multivariate_normal(np.zeros(d), sigma).entropy()
    return -h + 0.5 * (np.trace(sigma) + d * math.log(2 * math.pi))


class TestGaussianLoss:
    @pytest.mark.parametrize("seed", range(5))
    def test_matches_entropy_oracle(self, seed):
        sigma = random_cov(7, seed, normalized=False)
        assert gaussian_kl(sigma) == pytest.approx(kl_oracle(sigma), rel=1e-10, abs=1e-10)

    def test_identity_zero(self):
        assert gaussian_kl(np.eye(5)) == 0.0

    def test_normalized_equals_minus_half_logdet(self):
        sigma = random_cov(9, 3)
        assert gaussian_kl(sigma) == pytest.approx(-0.5 * np.linalg.slogdet(sigma)[1], rel=1e-12)

    def test_rejects_indefinite(self):
        with pytest.raises(DomainError):
            gaussian_kl(np.diag([1.0, -1.0]))

    def test_spectrum_kl(self):
        lam = np.array([0.5, 1.5])
        assert spectrum_kl(lam) == pytest.approx(gaussian_kl(np.diag(lam)))

    def test_covariance_state_validation(self):
        with pytest.raises(DomainError):
            CovarianceState(np.array([[1.0, 2.0], [0.0, 1.0]]))
        with pytest.raises(DomainError):
            CovarianceState(np.diag([1.0, 2.0]), normalized=True)
        st_ = CovarianceState(np.diag([0.5, 1.5]), normalized=True)
        assert st_.dim == 2 and np.asarray(st_).shape == (2, 2)


class TestExactBlock:
    @given(st.integers(2, 16), st.integers(0, 10_000), st.booleans())
    @settings(max_examples=50, deadline=None)
    def test_loss_identity(self, dim, seed, normalized):
        sigma = random_cov(dim, seed, normalized)
        q = sample_haar(dim, make_rng(seed, 1))
        out, s = apply_block_exact(sigma, q, return_scales=True)
        predicted = block_loss_update(gaussian_kl(sigma), s, np.trace(sigma) - dim)
        assert gaussian_kl(out) == pytest.approx(predicted, rel=1e-8, abs=1e-10)

    @given(st.integers(2, 16), st.integers(0, 10_000))
    @settings(max_examples=30, deadline=None)
    def test_unit_diagonal_and_monotone(self, dim, seed):
        sigma = random_cov(dim, seed)
        out = apply_block_exact(sigma, sample_haar(dim, make_rng(seed, 2)))
        np.testing.assert_array_equal(np.diagonal(out), 1.0)
        assert gaussian_kl(out) <= gaussian_kl(sigma) + 1e-12

    def test_matches_explicit_formula(self):
        sigma = random_cov(5, 11)
        q = sample_haar(5, make_rng(12))
        rot = q @ sigma @ q.T
        s_half = np.diag(1 / np.sqrt(np.diag(rot)))
        np.testing.assert_allclose(apply_block_exact(sigma, q), s_half @ rot @ s_half, atol=1e-14)

    def test_identity_rotation_of_diagonal_is_exact_gaussianization(self):
        out = apply_block_exact(np.diag([0.2, 1.8]), np.eye(2))
        np.testing.assert_allclose(out, np.eye(2))

    def test_shape_mismatch(self):
        with pytest.raises(InvalidDimensionError):
            apply_block_exact(np.eye(3), np.eye(2))


class TestRates:
    def test_rate_factor(self):
        assert iterative_rate_factor(2) == 0.5
        assert iterative_rate_factor(10) == pytest.approx(5 / 6)

    def test_required_layers_examples(self):
        r = gaussianization_required_layers(128, 0.3679)
        assert r.exact == pytest.approx(64.5, abs=0.05)
        assert gaussianization_required_layers(10).exact == pytest.approx(1 / -math.log(5 / 6))
        assert gaussianization_required_layers(10, 1.0) == (0.0, 0.0)

    @given(st.integers(1, 10_000))
    def test_linearization_is_close_for_large_d(self, dim):
        r = gaussianization_required_layers(dim)
        # log(1 - x) = -x - x^2/2 - ... so the exact value is a bit smaller
        assert r.exact <= r.linearized + 1e-9
        assert r.linearized - r.exact < 0.5

    def test_bad_ratio(self):
        with pytest.raises(DomainError):
            gaussianization_required_layers(5, 0.0)
        with pytest.raises(DomainError):
            gaussianization_required_layers(5, 1.5)

    def test_param_bounds(self):
        assert param_count_lower_bound(128) == 64.5
        assert learned_rotation_lower_bound(128, 1) == 32.0
        with pytest.raises(DomainError):
            learned_rotation_lower_bound(4, -1)


class TestCoupling:
    def test_required_layers(self):
        assert coupling_required_layers(math.exp(-1)) == pytest.approx(1.4427, abs=1e-4)

    def test_limit_large_d(self):
        assert coupling_rate_limit() == 0.5
        assert coupling_rate_limit(math.inf) == 0.5
        assert coupling_rate_limit(10**9) == pytest.approx(0.5, abs=1e-8)

    def test_limit_range(self):
        dims = np.unique(np.geomspace(2, 1000, 200).astype(int))
        vals = np.array([coupling_rate_limit(int(d)) for d in dims])
        assert np.all(vals >= 0.5) and np.all(vals <= 5 / 9 + 1e-15)
        assert coupling_rate_limit(4) == pytest.approx(5 / 9, abs=1e-15)

    @pytest.mark.parametrize("dim", [2, 3, 4, 10, 100])
    def test_small_loss_approaches_limit(self, dim):
        # the correction is O(sqrt(L))
        assert coupling_rate(1e-12, dim) == pytest.approx(coupling_rate_limit(dim), abs=1e-5)

    @given(st.floats(1e-6, 50.0), st.integers(2, 500))
    def test_rate_in_unit_interval(self, loss, dim):
        # tends to 1 at high loss
        g = coupling_rate(loss, dim)
        assert 0.0 < g <= 1.0

    def test_domain(self):
        with pytest.raises(DomainError):
            coupling_rate(0.0, 4)
        with pytest.raises(InvalidDimensionError):
            coupling_rate(1.0, 1)


class TestBounds:
    @given(spectra)
    def test_amgm_bracket(self, lam):
        lam = np.array(lam)
        lam = lam / lam.mean()
        b = amgm_bracket(lam)
        tol = 1e-12 * lam.max()
        assert b.lower - tol <= b.value <= b.upper + tol

    @given(st.integers(2, 40), st.integers(0, 10_000))
    @settings(max_examples=60, deadline=None)
    def test_kappa_bound_brute_force(self, dim, seed):
        lam = make_spectrum(6, dim, rng=make_rng(seed)).eigenvalues
        loss = spectrum_kl(lam)
        g = geometric_mean_from_loss(loss, dim)
        assert lam.max() / lam.min() <= kappa_upper_bound(g, dim) * (1 + 1e-9)

    @given(st.floats(0.01, 0.99))
    def test_kappa_bound_tight_in_2d(self, a):
        lam = np.array([1 - a, 1 + a])
        g = math.sqrt(lam.prod())
        assert kappa_upper_bound(g, 2) == pytest.approx((1 + a) / (1 - a), rel=1e-9)

    def test_loss_geomean_roundtrip(self):
        for loss in (0.0, 1e-6, 0.3, 40.0):
            g = geometric_mean_from_loss(loss, 17)
            assert loss_from_geometric_mean(g, 17) == pytest.approx(loss, abs=1e-12)

    @given(st.integers(2, 12), st.integers(0, 10_000))
    @settings(max_examples=40, deadline=None)
    def test_pythagorean(self, dim, seed):
        sigma = random_cov(dim, seed, normalized=False)
        dec = pythagorean_decomposition_gaussian(sigma)
        assert dec.dependence >= -1e-12
        assert dec.dependence + dec.marginals.sum() == pytest.approx(gaussian_kl(sigma), rel=1e-9,
                                                                      abs=1e-12)

    def test_pythagorean_diagonal(self):
        dec = pythagorean_decomposition_gaussian(np.diag([0.5, 2.0, 1.0]))
        assert dec.dependence == pytest.approx(0.0, abs=1e-15)

    def test_theory_bounds_kinds(self):
        kinds = [b.kind for b in theory_bounds(128)]
        assert kinds == list(BOUND_KINDS)
        assert "coupling-rate" not in [b.kind for b in theory_bounds(1)]


@given(st.integers(2, 64), st.integers(0, 1000))
@settings(max_examples=20, deadline=None)
def test_block_never_increases_loss_from_any_start(dim, seed):
    assume(dim > 1)
    sigma = random_cov(dim, seed)
    loss = gaussian_kl(sigma)
    rng = make_rng(seed, 9)
    for _ in range(5):
        sigma = apply_block_exact(sigma, sample_haar(dim, rng))
        new = gaussian_kl(sigma)
        assert new <= loss + 1e-10
        loss = new
