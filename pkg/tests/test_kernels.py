"""Kernel unit tests: closed forms, separability, and PSD structure."""

import math

import numpy as np
import pytest

from dynbo.kernels import (
    KernelSpec,
    MaternFamily,
    SpatioTemporalKernel,
    cross_covariance,
    gram_matrix,
    kernel_eval,
    st_kernel_eval,
)

# Frozen against a 40-digit evaluation of (1 + sqrt(5) + 5/3) * exp(-sqrt(5)).
MATERN52_AT_LENGTHSCALE = 0.52399410883182031
# Product of two such factors (spatial distance 1, temporal lag 1, unit scales).
PRODUCT_AT_UNIT_LAGS = 0.27456982609045355


def unit52() -> KernelSpec:
    return KernelSpec(MaternFamily.MATERN52, variance=1.0, lengthscale=1.0)


class TestKernelEval:
    def test_zero_lag_returns_variance(self):
        for fam in MaternFamily:
            spec = KernelSpec(fam, variance=2.5, lengthscale=0.7)
            assert kernel_eval(spec, 0.0) == pytest.approx(2.5, abs=1e-15)

    def test_large_distance_decays_to_zero(self):
        assert kernel_eval(unit52(), 100.0) < 1e-10

    def test_matern52_closed_form_at_lengthscale(self):
        assert kernel_eval(unit52(), 1.0) == pytest.approx(MATERN52_AT_LENGTHSCALE, abs=1e-12)

    def test_closed_forms_all_families(self):
        # Direct evaluation of the textbook expressions at r/l = 0.37.
        r = 0.37
        expected = {
            MaternFamily.MATERN12: math.exp(-r),
            MaternFamily.MATERN32: (1 + math.sqrt(3) * r) * math.exp(-math.sqrt(3) * r),
            MaternFamily.MATERN52: (1 + math.sqrt(5) * r + 5 * r * r / 3)
            * math.exp(-math.sqrt(5) * r),
        }
        for fam, want in expected.items():
            assert kernel_eval(KernelSpec(fam, 1.0, 1.0), r) == pytest.approx(want, abs=1e-14)

    def test_vectorized_matches_scalar(self):
        rs = np.linspace(0.0, 3.0, 17)
        out = kernel_eval(unit52(), rs)
        for r, v in zip(rs, out):
            assert v == pytest.approx(kernel_eval(unit52(), float(r)), abs=1e-15)

    def test_monotone_decay_each_family(self):
        rs = np.linspace(0.0, 5.0, 200)
        for fam in MaternFamily:
            vals = kernel_eval(KernelSpec(fam, 1.3, 0.6), rs)
            assert np.all(np.diff(vals) <= 1e-15)

    def test_rejects_negative_and_nonfinite_distance(self):
        with pytest.raises(ValueError):
            kernel_eval(unit52(), -0.1)
        with pytest.raises(ValueError):
            kernel_eval(unit52(), float("nan"))

    def test_rejects_invalid_spec(self):
        with pytest.raises(ValueError):
            KernelSpec(MaternFamily.MATERN52, variance=0.0, lengthscale=1.0)
        with pytest.raises(ValueError):
            KernelSpec(MaternFamily.MATERN52, variance=1.0, lengthscale=-2.0)


class TestSpatioTemporalKernel:
    def test_same_point_unit_variances(self):
        k = SpatioTemporalKernel(unit52(), unit52())
        assert st_kernel_eval(k, ((0.3, 0.4), 2), ((0.3, 0.4), 2)) == pytest.approx(1.0)

    def test_equal_times_reduce_to_spatial_kernel(self):
        k = SpatioTemporalKernel(KernelSpec(lengthscale=0.5), unit52())
        v = st_kernel_eval(k, ((0.0, 0.0), 3), ((0.25, 0.0), 3))
        assert v == pytest.approx(kernel_eval(k.spatial, 0.25), abs=1e-15)

    def test_product_of_unit_lags(self):
        k = SpatioTemporalKernel(unit52(), unit52())
        v = st_kernel_eval(k, ((0.0, 0.0), 0), ((1.0, 0.0), 1))
        assert v == pytest.approx(PRODUCT_AT_UNIT_LAGS, abs=1e-12)

    def test_zero_lag_value_is_variance_product(self):
        k = SpatioTemporalKernel(
            KernelSpec(variance=2.0, lengthscale=1.0), KernelSpec(variance=3.0, lengthscale=1.0)
        )
        assert st_kernel_eval(k, ((0.1, 0.9), 5), ((0.1, 0.9), 5)) == pytest.approx(6.0)

    def test_bounded_by_one_for_unit_variances(self):
        rng = np.random.default_rng(7)
        k = SpatioTemporalKernel(unit52(), KernelSpec(lengthscale=2.0))
        for _ in range(200):
            p = ((rng.random(), rng.random()), int(rng.integers(0, 10)))
            q = ((rng.random(), rng.random()), int(rng.integers(0, 10)))
            assert st_kernel_eval(k, p, q) <= 1.0 + 1e-15

    def test_dimension_mismatch_rejected(self):
        k = SpatioTemporalKernel(unit52(), unit52())
        with pytest.raises(ValueError):
            st_kernel_eval(k, ((0.0, 0.0, 0.0), 0), ((1.0, 0.0), 0))

    def test_symmetry_on_random_pairs(self):
        rng = np.random.default_rng(11)
        k = SpatioTemporalKernel(KernelSpec(lengthscale=0.3), KernelSpec(lengthscale=1.5))
        for _ in range(300):
            p = ((rng.random(), rng.random()), int(rng.integers(0, 8)))
            q = ((rng.random(), rng.random()), int(rng.integers(0, 8)))
            assert st_kernel_eval(k, p, q) == pytest.approx(st_kernel_eval(k, q, p), abs=1e-15)

    def test_separability_factorizes(self):
        rng = np.random.default_rng(13)
        k = SpatioTemporalKernel(
            KernelSpec(MaternFamily.MATERN32, 1.2, 0.4), KernelSpec(MaternFamily.MATERN12, 0.8, 2.0)
        )
        worst = 0.0
        for _ in range(1000):
            p = ((rng.random(), rng.random()), int(rng.integers(0, 10)))
            q = ((rng.random(), rng.random()), int(rng.integers(0, 10)))
            combined = st_kernel_eval(k, p, q)
            parts = kernel_eval(k.spatial, math.dist(p[0], q[0])) * kernel_eval(
                k.temporal, abs(p[1] - q[1])
            )
            worst = max(worst, abs(combined - parts))
        assert worst < 1e-12

    def test_gram_psd_on_random_sets(self):
        rng = np.random.default_rng(17)
        k = SpatioTemporalKernel(KernelSpec(lengthscale=0.25), KernelSpec(lengthscale=1.0))
        for _ in range(10):
            n = int(rng.integers(2, 21))
            locs = rng.random((n, 2))
            times = rng.integers(0, 6, size=n).astype(float)
            gram = gram_matrix(k, locs, times)
            eigs = np.linalg.eigvalsh(gram)
            assert eigs.min() >= -1e-8

    def test_cross_covariance_matches_pointwise(self):
        rng = np.random.default_rng(19)
        k = SpatioTemporalKernel(KernelSpec(lengthscale=0.3), KernelSpec(lengthscale=2.0))
        a = rng.random((4, 2))
        ta = rng.integers(0, 5, 4).astype(float)
        b = rng.random((3, 2))
        tb = rng.integers(0, 5, 3).astype(float)
        block = cross_covariance(k, a, ta, b, tb)
        for i in range(4):
            for j in range(3):
                want = st_kernel_eval(k, (tuple(a[i]), ta[i]), (tuple(b[j]), tb[j]))
                assert block[i, j] == pytest.approx(want, abs=1e-14)
