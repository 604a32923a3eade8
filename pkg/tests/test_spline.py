import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import stats

from itergauss import _kernels_py, kernels
from itergauss.errors import DomainError, FitError
from itergauss.rotations import make_rng
from itergauss.spline import (MonotoneTransform1D, SplineStack, finite_difference_derivatives,
                              fit_from_samples, fit_knots, knot_levels)

try:
    from itergauss import _kernels as compiled
except ImportError:  # pragma: no cover
    compiled = None

alphas = st.sampled_from([0.0, 0.3, 0.9, 1.0])


def skewed(n, seed):
    rng = make_rng(seed)
    return rng.gamma(2.0, 1.0, n) - 2.0


class TestKnots:
    def test_levels(self):
        np.testing.assert_allclose(knot_levels(2), [0.25, 0.5, 0.75])

    def test_fit_knots_map_quantiles_to_normal_quantiles(self):
        x = skewed(10_000, 1)
        xk, yk = fit_knots(x, bins=8)
        assert xk.size == 9
        np.testing.assert_allclose(yk, stats.norm.ppf(np.arange(1, 10) / 10))
        np.testing.assert_allclose(xk, np.quantile(x, np.arange(1, 10) / 10))

    def test_derivatives_boundary_and_average(self):
        xk = np.array([0.0, 1.0, 3.0])
        yk = np.array([0.0, 2.0, 3.0])
        d = finite_difference_derivatives(xk, yk)
        # slopes 2 and 0.5 weighted by the opposite interval widths
        assert d.tolist() == [1.0, (2.0 * 2.0 + 0.5 * 1.0) / 3.0, 1.0]

    def test_ties_merge(self):
        x = np.concatenate([np.zeros(600), np.linspace(1, 2, 400)])
        xk, yk = fit_knots(x, bins=16)
        assert np.all(np.diff(xk) > 0) and np.all(np.diff(yk) > 0)

    def test_ties_error(self):
        x = np.concatenate([np.zeros(600), np.linspace(1, 2, 400)])
        with pytest.raises(FitError):
            fit_knots(x, bins=16, ties="error")

    def test_constant_sample(self):
        with pytest.raises(FitError):
            fit_knots(np.ones(100), bins=8)

    def test_too_few(self):
        with pytest.raises(FitError):
            fit_knots([0.0, 1.0], bins=8)

    def test_validation(self):
        with pytest.raises(DomainError):
            MonotoneTransform1D([0.0, 0.0], [0.0, 1.0], [1.0, 1.0])
        with pytest.raises(DomainError):
            MonotoneTransform1D([0.0, 1.0], [0.0, 1.0], [1.0, 0.0])
        with pytest.raises(DomainError):
            MonotoneTransform1D([0.0, 1.0], [0.0, 1.0], [1.0, 1.0], alpha_inner=1.5)


class TestTransform:
    @given(st.integers(0, 1000), alphas, alphas)
    @settings(max_examples=40, deadline=None)
    def test_roundtrip(self, seed, a1, a2):
        t = fit_from_samples(skewed(2000, seed), bins=32, alpha_inner=a1, alpha_tail=a2)
        x = np.linspace(-8, 15, 2001)
        y, _ = t.forward(x)
        assert np.abs(t.inverse(y) - x).max() < 1e-9

    @given(st.integers(0, 1000), alphas, alphas)
    @settings(max_examples=40, deadline=None)
    def test_strictly_increasing_and_continuous(self, seed, a1, a2):
        t = fit_from_samples(skewed(2000, seed), bins=32, alpha_inner=a1, alpha_tail=a2)
        x = np.sort(np.concatenate([np.linspace(-8, 15, 5001), t.knots_x]))
        y, _ = t.forward(x)
        assert np.all(np.diff(y) > 0)
        # continuity at the outer knots where the tails are attached
        eps = 1e-9
        for edge in (t.knots_x[0], t.knots_x[-1]):
            lo, _ = t.forward(np.array([edge - eps, edge + eps]))
            assert abs(lo[1] - lo[0]) < 1e-7

    @given(st.integers(0, 1000), alphas)
    @settings(max_examples=30, deadline=None)
    def test_log_derivative_matches_finite_differences(self, seed, a1):
        t = fit_from_samples(skewed(3000, seed), bins=32, alpha_inner=a1, alpha_tail=0.5)
        x = np.linspace(-6, 12, 997)
        # avoid straddling knots where the second derivative jumps
        _, logd = t.forward(x)
        h = 1e-6
        num = (t.forward(x + h)[0] - t.forward(x - h)[0]) / (2 * h)
        rel = np.abs(np.exp(logd) - num) / np.exp(logd)
        assert np.median(rel) < 1e-6
        assert rel.max() < 1e-3

    def test_identity_blend(self):
        t = fit_from_samples(skewed(1000, 2), bins=16, alpha_inner=1.0, alpha_tail=1.0)
        x = np.linspace(-5, 9, 50)
        y, logd = t(x)
        np.testing.assert_allclose(y, x, atol=1e-14)
        np.testing.assert_allclose(logd, 0.0, atol=1e-14)

    def test_shape_preserved(self):
        t = fit_from_samples(skewed(500, 3), bins=8)
        y, logd = t.forward(np.zeros((3, 4)))
        assert y.shape == logd.shape == (3, 4)
        assert t.inverse(y).shape == (3, 4)

    def test_gaussianizes_a_skewed_sample(self):
        x = skewed(200_000, 4)
        t = fit_from_samples(x, bins=128, alpha_inner=0.0, alpha_tail=0.0)
        y, _ = t(x)
        # tails stay linear, so only compare the bulk
        levels = np.linspace(0.02, 0.98, 49)
        assert np.abs(np.quantile(y, levels) - stats.norm.ppf(levels)).max() < 0.01

    def test_near_identity_on_normal_data(self):
        x = make_rng(5).standard_normal(400_000)
        t = fit_from_samples(x, bins=128, alpha_inner=0.0, alpha_tail=0.0)
        grid = np.linspace(-2.5, 2.5, 101)
        assert np.abs(t(grid)[0] - grid).max() < 0.02


class TestStack:
    def test_stack_matches_single_transforms(self):
        rng = make_rng(6)
        data = np.column_stack([rng.standard_normal(3000), skewed(3000, 7),
                                np.concatenate([np.zeros(1500), rng.uniform(1, 2, 1500)])])
        stack = SplineStack.fit(data, bins=32, alpha_inner=0.2, alpha_tail=0.7)
        assert stack.n_knots[2] < 33 and stack.n_knots[0] == 33
        y, logdet = stack.forward(data)
        total = np.zeros(data.shape[0])
        for j, t in enumerate(stack.transforms()):
            yj, lj = t(data[:, j])
            np.testing.assert_allclose(y[:, j], yj, rtol=0, atol=1e-13)
            total += lj
        np.testing.assert_allclose(logdet, total, atol=1e-11)
        np.testing.assert_allclose(stack.log_derivative(data).sum(axis=1), logdet, atol=1e-11)
        np.testing.assert_allclose(stack.inverse(y), data, atol=1e-9)

    def test_from_transforms_roundtrip(self):
        ts = [fit_from_samples(skewed(800, s), bins=8 + s, alpha_inner=0.5, alpha_tail=0.9)
              for s in range(3)]
        stack = SplineStack.from_transforms(ts)
        x = np.column_stack([np.linspace(-3, 5, 40)] * 3)
        y, _ = stack.forward(x)
        for j, t in enumerate(ts):
            np.testing.assert_allclose(y[:, j], t(x[:, j])[0], atol=1e-13)

    def test_mixed_blend_rejected(self):
        a = fit_from_samples(skewed(100, 1), bins=4, alpha_inner=0.1)
        b = fit_from_samples(skewed(100, 2), bins=4, alpha_inner=0.2)
        with pytest.raises(DomainError):
            SplineStack.from_transforms([a, b])


@pytest.mark.skipif(compiled is None, reason="compiled extension not built")
class TestBackends:
    @given(st.integers(0, 500), alphas, alphas)
    @settings(max_examples=25, deadline=None)
    def test_compiled_matches_numpy(self, seed, a1, a2):
        rng = make_rng(seed)
        data = np.column_stack([skewed(1500, seed), rng.standard_normal(1500)])
        s = SplineStack.fit(data, bins=24, alpha_inner=a1, alpha_tail=a2)
        args = s._args()
        x = rng.normal(0, 4, (500, 2))
        y1, l1 = compiled.rq_forward(x, *args)
        y2, l2 = _kernels_py.rq_forward(x, *args)
        np.testing.assert_allclose(y1, y2, rtol=0, atol=1e-12)
        np.testing.assert_allclose(l1, l2, rtol=0, atol=1e-12)
        np.testing.assert_allclose(compiled.rq_log_derivative(x, *args),
                                   _kernels_py.rq_log_derivative(x, *args), atol=1e-12)
        np.testing.assert_allclose(compiled.rq_inverse(y1, *args),
                                   _kernels_py.rq_inverse(y1, *args), atol=1e-10)

    def test_dispatch(self):
        assert kernels.BACKEND in ("cython", "python")

    def test_bad_counts(self):
        with pytest.raises(ValueError):
            compiled.rq_forward(np.zeros((2, 1)), np.zeros((1, 3)), np.zeros((1, 3)),
                                np.ones((1, 3)), np.array([1]), 0.0, 0.0)
