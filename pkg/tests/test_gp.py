"""GP regression tests: interpolation, dense-solve oracle equivalence,
marginal likelihood, and lengthscale recovery."""

import math

import numpy as np
import pytest

from dynbo.gp import (
    GpFitError,
    Sample,
    fit_hyperparams,
    gp_extend,
    gp_fit,
    gp_predict,
    log_marginal_likelihood,
)
from dynbo.kernels import KernelSpec, MaternFamily, SpatioTemporalKernel, cross_covariance, gram_matrix

# Univariate Gaussian log-density at 0 with unit variance: -log(2*pi)/2.
LML_SINGLE_ZERO = -0.9189385332046727


def unit_kernel(ls=0.3, lt=2.0) -> SpatioTemporalKernel:
    return SpatioTemporalKernel(KernelSpec(lengthscale=ls), KernelSpec(lengthscale=lt))


def random_samples(rng, n, times=(0, 1, 2, 3)):
    return [
        Sample(
            location=(float(rng.random()), float(rng.random())),
            time=int(rng.choice(times)),
            value=float(rng.normal()),
        )
        for _ in range(n)
    ]


def dense_reference(model, locs, times):
    """Posterior via explicit dense LU solves; independent of the Cholesky path."""
    a = gram_matrix(model.kernel, model.locations, model.times) + model.noise * np.eye(model.n)
    k_star = cross_covariance(model.kernel, locs, times, model.locations, model.times)
    means = k_star @ np.linalg.solve(a, model.values) + model.mean_shift
    variances = model.kernel.prior_variance - np.einsum(
        "ij,ji->i", k_star, np.linalg.solve(a, k_star.T)
    )
    return means, np.maximum(variances, 0.0)


class TestGpFit:
    def test_single_sample_interpolates_at_zero_noise(self):
        model = gp_fit([Sample((0.4, 0.6), 0, 1.0, 0.73)], unit_kernel(), noise=0.0)
        means, variances = gp_predict(model, [((0.4, 0.6), 0)])
        assert means[0] == pytest.approx(0.73, abs=1e-12)
        assert variances[0] == pytest.approx(0.0, abs=1e-12)

    def test_near_interpolation_collinear_samples(self):
        samples = [Sample((0.1 * i, 0.0), 0, 1.0, float(i)) for i in range(1, 4)]
        model = gp_fit(samples, unit_kernel(), noise=1e-6)
        means, _ = gp_predict(model, [(s.location, s.time) for s in samples])
        for s, mu in zip(samples, means):
            assert mu == pytest.approx(s.value, abs=1e-4)

    def test_cholesky_reconstructs_gram(self):
        rng = np.random.default_rng(0)
        samples = random_samples(rng, 12)
        model = gp_fit(samples, unit_kernel(), noise=1e-4)
        target = gram_matrix(model.kernel, model.locations, model.times) + model.noise * np.eye(12)
        recon = model.chol @ model.chol.T
        assert np.max(np.abs(recon - target)) / np.max(np.abs(target)) < 1e-8

    def test_empty_samples_rejected(self):
        with pytest.raises(ValueError):
            gp_fit([], unit_kernel(), noise=1e-4)

    def test_negative_noise_rejected(self):
        with pytest.raises(ValueError):
            gp_fit([Sample((0.5, 0.5), 0, 1.0, 0.0)], unit_kernel(), noise=-1.0)

    def test_duplicates_with_zero_noise_escalate_jitter(self):
        # Jitter escalation keeps the fit alive; effective noise is recorded.
        dup = [Sample((0.5, 0.5), 0, 1.0, 0.2), Sample((0.5, 0.5), 0, 1.0, 0.2)]
        model = gp_fit(dup, unit_kernel(), noise=0.0)
        assert model.noise > 0.0

    def test_unsalvageable_gram_raises_fit_error(self):
        # Coincident points at a variance so large the 1e-4 jitter cap is
        # below one ulp of the Gram entries: every retry fails identically.
        dup = [Sample((0.5, 0.5), 0, 1.0, 0.2)] * 3
        kernel = SpatioTemporalKernel(
            KernelSpec(variance=1e15, lengthscale=0.3), KernelSpec(lengthscale=2.0)
        )
        with pytest.raises(GpFitError):
            gp_fit(dup, kernel, noise=0.0)

    def test_fit_deterministic(self):
        rng = np.random.default_rng(5)
        samples = random_samples(rng, 9)
        m1 = gp_fit(samples, unit_kernel(), noise=1e-4)
        m2 = gp_fit(samples, unit_kernel(), noise=1e-4)
        assert np.array_equal(m1.chol, m2.chol)
        assert np.array_equal(m1.alpha, m2.alpha)


class TestGpPredict:
    def test_reverts_to_prior_far_from_data(self):
        model = gp_fit([Sample((0.0, 0.0), 0, 1.0, 0.9)], unit_kernel(ls=0.05, lt=1.0), noise=1e-6)
        means, variances = gp_predict(model, [((1.0, 1.0), 0)])
        assert abs(means[0]) < 1e-6
        assert variances[0] == pytest.approx(model.kernel.prior_variance, abs=1e-6)

    def test_matches_dense_oracle(self):
        rng = np.random.default_rng(1)
        samples = random_samples(rng, 10)
        model = gp_fit(samples, unit_kernel(), noise=1e-4)
        locs = rng.random((5, 2))
        times = rng.integers(0, 4, 5).astype(float)
        means, variances = gp_predict(model, (locs, times))
        ref_means, ref_vars = dense_reference(model, locs, times)
        np.testing.assert_allclose(means, ref_means, atol=1e-8)
        np.testing.assert_allclose(variances, ref_vars, atol=1e-8)

    def test_oracle_equivalence_sweep(self):
        # 50 random instances, n <= 20, random hyperparameters.
        rng = np.random.default_rng(2)
        for _ in range(50):
            kernel = SpatioTemporalKernel(
                KernelSpec(
                    family=rng.choice(list(MaternFamily)),
                    variance=float(rng.uniform(0.5, 2.0)),
                    lengthscale=float(rng.uniform(0.05, 0.9)),
                ),
                KernelSpec(
                    family=rng.choice(list(MaternFamily)),
                    variance=float(rng.uniform(0.5, 2.0)),
                    lengthscale=float(rng.uniform(0.5, 4.0)),
                ),
            )
            samples = random_samples(rng, int(rng.integers(1, 21)))
            model = gp_fit(samples, kernel, noise=float(rng.uniform(1e-6, 1e-2)))
            locs = rng.random((4, 2))
            times = rng.integers(0, 4, 4).astype(float)
            means, variances = gp_predict(model, (locs, times))
            ref_means, ref_vars = dense_reference(model, locs, times)
            np.testing.assert_allclose(means, ref_means, atol=1e-8)
            np.testing.assert_allclose(variances, ref_vars, atol=1e-8)

    def test_posterior_variance_bounded_by_prior(self):
        rng = np.random.default_rng(3)
        samples = random_samples(rng, 15)
        model = gp_fit(samples, unit_kernel(), noise=1e-4)
        locs = rng.random((50, 2))
        times = rng.integers(0, 4, 50).astype(float)
        _, variances = gp_predict(model, (locs, times))
        assert np.all(variances <= model.kernel.prior_variance + 1e-8)

    def test_more_data_never_increases_variance(self):
        rng = np.random.default_rng(4)
        samples = random_samples(rng, 8)
        extra = random_samples(rng, 4)
        queries = (rng.random((20, 2)), rng.integers(0, 4, 20).astype(float))
        _, var_small = gp_predict(gp_fit(samples, unit_kernel(), noise=1e-6), queries)
        _, var_big = gp_predict(gp_fit(samples + extra, unit_kernel(), noise=1e-6), queries)
        assert np.all(var_big <= var_small + 1e-6)

    def test_permutation_invariance(self):
        rng = np.random.default_rng(6)
        samples = random_samples(rng, 10)
        queries = (rng.random((7, 2)), rng.integers(0, 4, 7).astype(float))
        m1, v1 = gp_predict(gp_fit(samples, unit_kernel(), noise=1e-5), queries)
        perm = list(reversed(samples))
        m2, v2 = gp_predict(gp_fit(perm, unit_kernel(), noise=1e-5), queries)
        np.testing.assert_allclose(m1, m2, atol=1e-9)
        np.testing.assert_allclose(v1, v2, atol=1e-9)

    def test_nonfinite_query_rejected(self):
        model = gp_fit([Sample((0.5, 0.5), 0, 1.0, 0.1)], unit_kernel(), noise=1e-4)
        with pytest.raises(ValueError):
            gp_predict(model, [((float("nan"), 0.5), 0)])

    def test_mean_shift_round_trip(self):
        # Fitting with a midpoint shift returns predictions on the raw scale.
        samples = [Sample((0.5, 0.5), 0, 1.0, 0.8), Sample((0.2, 0.1), 0, 1.0, 0.6)]
        model = gp_fit(samples, unit_kernel(), noise=1e-8, mean_shift=0.5)
        means, _ = gp_predict(model, [((0.5, 0.5), 0)])
        assert means[0] == pytest.approx(0.8, abs=1e-4)
        far, _ = gp_predict(model, [((0.5, 0.5), 1000)])
        assert far[0] == pytest.approx(0.5, abs=1e-9)  # reverts to the midpoint


class TestGpExtend:
    def test_extend_matches_full_refit(self):
        rng = np.random.default_rng(7)
        samples = random_samples(rng, 14)
        base = gp_fit(samples[:9], unit_kernel(), noise=1e-4)
        extended = gp_extend(base, samples[9:])
        refit = gp_fit(samples, unit_kernel(), noise=1e-4)
        queries = (rng.random((6, 2)), rng.integers(0, 4, 6).astype(float))
        m1, v1 = gp_predict(extended, queries)
        m2, v2 = gp_predict(refit, queries)
        np.testing.assert_allclose(m1, m2, atol=1e-10)
        np.testing.assert_allclose(v1, v2, atol=1e-10)

    def test_extend_with_nothing_is_identity(self):
        model = gp_fit([Sample((0.5, 0.5), 0, 1.0, 0.3)], unit_kernel(), noise=1e-4)
        assert gp_extend(model, []) is model


class TestLogMarginalLikelihood:
    def test_single_zero_sample_unit_prior(self):
        kernel = SpatioTemporalKernel(KernelSpec(), KernelSpec())
        model = gp_fit([Sample((0.5, 0.5), 0, 1.0, 0.0)], kernel, noise=0.0)
        assert log_marginal_likelihood(model) == pytest.approx(LML_SINGLE_ZERO, abs=1e-12)

    def test_scaling_values_decreases_lml(self):
        rng = np.random.default_rng(8)
        samples = random_samples(rng, 6)
        scaled = [Sample(s.location, s.time, s.scale, 10.0 * s.value) for s in samples]
        small = log_marginal_likelihood(gp_fit(samples, unit_kernel(), noise=1e-4))
        big = log_marginal_likelihood(gp_fit(scaled, unit_kernel(), noise=1e-4))
        assert big < small

    def test_matches_dense_gaussian_density(self):
        rng = np.random.default_rng(9)
        samples = random_samples(rng, 5)
        model = gp_fit(samples, unit_kernel(), noise=1e-3)
        a = gram_matrix(model.kernel, model.locations, model.times) + model.noise * np.eye(5)
        sign, logdet = np.linalg.slogdet(a)
        assert sign > 0
        y = model.values
        want = -0.5 * (y @ np.linalg.solve(a, y)) - 0.5 * logdet - 2.5 * math.log(2 * math.pi)
        assert log_marginal_likelihood(model) == pytest.approx(want, abs=1e-8)


class TestFitHyperparams:
    def test_recovers_generating_lengthscale(self):
        # Synthetic recovery: draw fields from a known GP (spatial l = 0.2)
        # and check the selected spatial lengthscale lands within one grid
        # step in at least 80% of 20 seeded replications.
        true_kernel = unit_kernel(ls=0.2, lt=2.0)
        spatial_grid = (0.05, 0.1, 0.2, 0.4, 0.8)
        temporal_grid = (1.0, 2.0, 4.0)
        hits = 0
        for rep in range(20):
            rng = np.random.default_rng(100 + rep)
            locs = rng.random((40, 2))
            times = np.repeat(np.arange(4.0), 10)
            gram = gram_matrix(true_kernel, locs, times) + 1e-6 * np.eye(40)
            values = np.linalg.cholesky(gram) @ rng.standard_normal(40)
            samples = [
                Sample((float(x), float(y)), int(t), 1.0, float(v))
                for (x, y), t, v in zip(locs, times, values)
            ]
            ls, _ = fit_hyperparams(samples, true_kernel, spatial_grid, temporal_grid, noise=1e-6)
            if ls in (0.1, 0.2, 0.4):
                hits += 1
        assert hits >= 16

    def test_constant_values_tie_break_deterministic(self):
        samples = [Sample((0.1 * i, 0.2), i % 2, 1.0, 3.0) for i in range(8)]
        grid_s = (0.1, 0.2)
        grid_t = (1.0, 2.0)
        picks = {
            fit_hyperparams(samples, unit_kernel(), grid_s, grid_t, noise=1e-2) for _ in range(3)
        }
        assert len(picks) == 1

    def test_single_time_slice_rejected(self):
        samples = [Sample((0.1 * i, 0.2), 3, 1.0, float(i)) for i in range(8)]
        with pytest.raises(ValueError):
            fit_hyperparams(samples, unit_kernel(), (0.1, 0.2), (1.0, 2.0))

    def test_too_few_samples_rejected(self):
        samples = [Sample((0.1, 0.2), 0, 1.0, 0.0), Sample((0.3, 0.2), 1, 1.0, 0.1)]
        with pytest.raises(ValueError):
            fit_hyperparams(samples, unit_kernel(), (0.1, 0.2), (1.0, 2.0))

    def test_empty_grid_rejected(self):
        samples = [Sample((0.1 * i, 0.2), i % 2, 1.0, float(i)) for i in range(8)]
        with pytest.raises(ValueError):
            fit_hyperparams(samples, unit_kernel(), (), (1.0, 2.0))
