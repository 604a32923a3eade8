import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import stats

from itergauss.errors import (DegenerateSpectrumError, DomainError, InvalidDimensionError,
                              SpectrumRejectedError)
from itergauss.rotations import (LAMBDA_MIN, Spectrum, alpha_grid, is_orthogonal, make_rng,
                                 make_spectrum, rotate_covariance, sample_haar, spectrum_grid)
from itergauss.theory import gaussian_kl, haar_diagonal_moments


class TestHaar:
    @given(st.integers(1, 40), st.integers(0, 2**32 - 1))
    @settings(max_examples=40, deadline=None)
    def test_orthogonal(self, dim, seed):
        q = sample_haar(dim, make_rng(seed))
        assert np.abs(q @ q.T - np.eye(dim)).max() < 1e-10
        assert abs(abs(np.linalg.det(q)) - 1.0) < 1e-8

    def test_zero_dim_rejected(self):
        with pytest.raises(InvalidDimensionError):
            sample_haar(0, make_rng(0))

    def test_dim_one_signs(self):
        vals = np.array([sample_haar(1, make_rng(s))[0, 0] for s in range(400)])
        assert set(np.unique(vals)) == {-1.0, 1.0}
        assert 0.4 < np.mean(vals > 0) < 0.6

    def test_batched_shape(self):
        qs = sample_haar(5, make_rng(1), size=7)
        assert qs.shape == (7, 5, 5)
        assert all(is_orthogonal(q) for q in qs)

    def test_angle_uniform_in_2d(self):
        qs = sample_haar(2, make_rng(3), size=10_000)
        angle = np.mod(np.arctan2(qs[:, 1, 0], qs[:, 0, 0]), 2 * np.pi)
        assert stats.kstest(angle / (2 * np.pi), "uniform").pvalue > 0.01

    def test_diagonal_mean_is_trace_over_d(self):
        lam = make_spectrum(5, 6, rng=make_rng(4)).eigenvalues
        qs = sample_haar(6, make_rng(5), size=100_000)
        diag = np.einsum("kij,j,kij->ki", qs, lam, qs)
        se = diag[:, 0].std() / math.sqrt(diag.shape[0])
        assert abs(diag[:, 0].mean() - lam.sum() / 6) < 3 * se

    @pytest.mark.parametrize("dim", [4, 16, 64])
    def test_diagonal_variance(self, dim):
        lam = make_spectrum(6, dim, rng=make_rng(dim)).eigenvalues
        qs = sample_haar(dim, make_rng(dim, 1), size=100_000 if dim < 64 else 20_000)
        # entry (0, 0) only needs the first row of each rotation
        d00 = (qs[:, 0, :] ** 2) @ lam
        _, var_theory = haar_diagonal_moments(lam)
        n = d00.size
        # standard error of the sample variance from the fourth central moment
        m4 = np.mean((d00 - d00.mean()) ** 4)
        se = math.sqrt(max(m4 - d00.var() ** 2, 0.0) / n)
        assert abs(d00.var(ddof=1) - var_theory) < 3 * se

    def test_streams_are_reproducible_and_distinct(self):
        a = make_rng(7, 1, 2).standard_normal(4)
        b = make_rng(7, 1, 2).standard_normal(4)
        c = make_rng(7, 2, 1).standard_normal(4)
        assert np.array_equal(a, b)
        assert not np.array_equal(a, c)


class TestSpectrum:
    def test_case1_example(self):
        s = make_spectrum(1, 3, 2.0)
        np.testing.assert_allclose(s.eigenvalues, [1.5, 0.75, 0.75], atol=1e-14)

    def test_case4_example(self):
        s = make_spectrum(4, 4, 0.5)
        np.testing.assert_allclose(s.eigenvalues, [0.4, 0.4, 1.6, 1.6], atol=1e-14)

    @pytest.mark.parametrize("case", [1, 2, 4])
    def test_alpha_one_is_degenerate(self, case):
        with pytest.raises(DegenerateSpectrumError):
            make_spectrum(case, 5, 1.0)

    def test_case3_rejection(self):
        with pytest.raises(SpectrumRejectedError):
            make_spectrum(3, 10, 500.0)

    def test_case3_is_shift(self):
        s = make_spectrum(3, 4, 0.5)
        # raw (1, .5, .5, .5), mean .625, shifted by +.375
        np.testing.assert_allclose(s.eigenvalues, [1.375, 0.875, 0.875, 0.875])

    def test_unknown_case(self):
        with pytest.raises(DomainError):
            make_spectrum(7, 4, 2.0)

    def test_random_cases_need_rng(self):
        with pytest.raises(DomainError):
            make_spectrum(5, 4)

    @given(st.integers(1, 6), st.integers(2, 60), st.integers(0, 10_000))
    @settings(max_examples=60, deadline=None)
    def test_trace_and_positivity(self, case, dim, seed):
        rng = make_rng(seed)
        for s in spectrum_grid(case, dim, n_alpha=3, n_random=2, rng=rng):
            assert np.all(s.eigenvalues > 0)
            assert abs(s.eigenvalues.sum() - dim) < 1e-10
            assert s.dim == dim

    def test_alpha_grid_excludes_endpoints(self):
        g = alpha_grid(1, 8)
        assert g.size == 16
        assert np.all((g > LAMBDA_MIN) & (g < 1 / LAMBDA_MIN)) and not np.any(g == 1.0)
        assert np.all(alpha_grid(4, 8) < 1.0)

    def test_immutable(self):
        s = make_spectrum(1, 3, 2.0)
        with pytest.raises(ValueError):
            s.eigenvalues[0] = 1.0

    def test_covariance_has_spectrum(self):
        s = make_spectrum(6, 8, rng=make_rng(2))
        q = sample_haar(8, make_rng(3))
        np.testing.assert_allclose(np.linalg.eigvalsh(s.covariance(q)),
                                   np.sort(s.eigenvalues), atol=1e-12)

    def test_spectrum_rejects_nonpositive(self):
        with pytest.raises(DomainError):
            Spectrum([1.0, 0.0])


class TestRotateCovariance:
    def test_identity_invariant(self):
        q = sample_haar(6, make_rng(0))
        np.testing.assert_allclose(rotate_covariance(np.eye(6), q), np.eye(6), atol=1e-14)

    @given(st.integers(2, 20), st.integers(0, 10_000))
    @settings(max_examples=30, deadline=None)
    def test_spectrum_and_kl_invariant(self, dim, seed):
        rng = make_rng(seed)
        sigma = make_spectrum(6, dim, rng=rng).covariance(sample_haar(dim, rng))
        rotated = rotate_covariance(sigma, sample_haar(dim, rng))
        np.testing.assert_allclose(np.linalg.eigvalsh(rotated), np.linalg.eigvalsh(sigma),
                                   atol=1e-9 * max(1.0, np.abs(sigma).max()))
        assert abs(gaussian_kl(rotated) - gaussian_kl(sigma)) < 1e-9 * max(1.0, gaussian_kl(sigma))

    def test_mismatch(self):
        with pytest.raises(InvalidDimensionError):
            rotate_covariance(np.eye(3), np.eye(4))
