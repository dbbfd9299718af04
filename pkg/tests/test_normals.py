"""Gaussian special functions against closed forms and quadrature oracles.

High-precision expected values were frozen from 40-digit evaluations of the
closed forms during test construction.
"""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.special import erfc

from copmtl.errors import DomainError
from copmtl.normals import (
    BvnSpec,
    bvn_cdf,
    bvn_cdf_general,
    bvn_cdf_partials,
    std_cdf,
    std_pdf,
    std_quantile,
)

from conftest import bvn_quad_oracle

Z_975 = 1.959963984540054  # quantile of 0.975, frozen from extended precision


class TestUnivariate:
    def test_pdf_at_zero(self):
        assert std_pdf(0.0) == pytest.approx(0.3989422804014327, abs=1e-16)

    def test_pdf_at_one(self):
        # frozen: exp(-1/2)/sqrt(2 pi) at 40 digits
        assert std_pdf(1.0) == pytest.approx(0.24197072451914337, abs=1e-16)

    def test_pdf_symmetry(self, rng):
        x = rng.normal(0, 3, 300)
        np.testing.assert_array_equal(std_pdf(x), std_pdf(-x))

    def test_cdf_at_zero(self):
        assert std_cdf(0.0) == 0.5

    def test_cdf_975(self):
        assert abs(std_cdf(Z_975) - 0.975) <= 1e-15

    def test_cdf_limits(self):
        assert std_cdf(np.inf) == 1.0
        assert std_cdf(-np.inf) == 0.0

    def test_cdf_erfc_identity(self, rng):
        x = rng.uniform(-8, 8, 500)
        np.testing.assert_allclose(std_cdf(x), 0.5 * erfc(-x / np.sqrt(2)), rtol=0, atol=1e-15)

    def test_cdf_monotone(self, rng):
        x = np.sort(rng.uniform(-10, 10, 1000))
        assert np.all(np.diff(std_cdf(x)) >= 0)

    def test_quantile_median(self):
        assert std_quantile(0.5) == 0.0

    def test_quantile_975(self):
        q = std_quantile(0.975)
        assert q == pytest.approx(Z_975, abs=1e-9)
        assert abs(std_cdf(q) - 0.975) <= 1e-12

    def test_quantile_roundtrip(self):
        # Above x ~ 5.2 the CDF value 1-p collapses onto the float64 grid near
        # one (absolute spacing ~1.1e-16), so no 64-bit quantile can undo the
        # rounding tighter than ~eps/(2*pdf(x)); assert 1e-10 where that bound
        # allows it and the representation bound beyond.
        x = np.linspace(-6, 6, 241)
        back = std_quantile(std_cdf(x))
        rep_limit = np.finfo(float).eps / (2.0 * std_pdf(x))
        tol = np.maximum(1e-10, 1.2 * rep_limit * (x > 0))
        assert np.all(np.abs(back - x) <= tol)
        strict = x[x <= 5.0]
        np.testing.assert_allclose(
            std_quantile(std_cdf(strict)), strict, rtol=0, atol=1e-10
        )

    @pytest.mark.parametrize("bad", [0.0, 1.0, -0.2, 1.3, float("nan")])
    def test_quantile_domain(self, bad):
        with pytest.raises(DomainError):
            std_quantile(bad)

    def test_cdf_rejects_nan(self):
        with pytest.raises(DomainError):
            std_cdf(float("nan"))


class TestBvnCdf:
    def test_independence_origin(self):
        assert bvn_cdf(0.0, 0.0, 0.0) == pytest.approx(0.25, abs=1e-15)

    def test_arcsine_identity(self):
        for rho in (-0.999, -0.9, -0.5, -0.1, 0.1, 0.5, 0.9, 0.999):
            expected = 0.25 + np.arcsin(rho) / (2 * np.pi)
            assert bvn_cdf(0.0, 0.0, rho) == pytest.approx(expected, abs=1e-12)

    def test_spec_object(self):
        spec = BvnSpec(h=0.0, k=0.0, rho=0.5)
        assert bvn_cdf(spec) == pytest.approx(1.0 / 3.0, abs=1e-12)

    def test_argument_symmetry(self, rng):
        for _ in range(200):
            h, k = rng.normal(0, 2, 2)
            rho = rng.uniform(-0.999, 0.999)
            assert bvn_cdf(h, k, rho) == pytest.approx(bvn_cdf(k, h, rho), abs=1e-14)

    def test_quadrature_oracle(self, rng):
        for _ in range(250):
            h, k = rng.normal(0, 2.5, 2)
            rho = rng.uniform(-0.999, 0.999)
            assert bvn_cdf(h, k, rho) == pytest.approx(bvn_quad_oracle(h, k, rho), abs=1e-10)

    def test_infinite_limits(self, rng):
        h = rng.normal(0, 2, 50)
        for rho in (-0.7, 0.0, 0.4):
            np.testing.assert_allclose(
                bvn_cdf(h, np.full_like(h, np.inf), rho), std_cdf(h), rtol=0, atol=1e-12
            )
        assert bvn_cdf(-np.inf, 1.0, 0.5) == 0.0
        assert bvn_cdf(np.inf, np.inf, -0.3) == 1.0

    def test_reflection(self, rng):
        for _ in range(200):
            h, k = rng.normal(0, 2, 2)
            rho = rng.uniform(-0.99, 0.99)
            total = bvn_cdf(h, k, rho) + bvn_cdf(h, -k, -rho)
            assert total == pytest.approx(std_cdf(h), abs=1e-10)

    def test_monotonicity(self, rng):
        rho = 0.6
        h = np.sort(rng.uniform(-4, 4, 200))
        values = bvn_cdf(h, 0.3, rho)
        assert np.all(np.diff(values) >= -1e-14)
        k = np.sort(rng.uniform(-4, 4, 200))
        values = bvn_cdf(-0.5, k, rho)
        assert np.all(np.diff(values) >= -1e-14)

    @pytest.mark.parametrize("rho", [1.0, -1.0, 1.5, float("nan")])
    def test_rho_domain(self, rho):
        with pytest.raises(DomainError):
            bvn_cdf(0.0, 0.0, rho)

    def test_spec_invariants(self):
        with pytest.raises(DomainError):
            BvnSpec(h=float("nan"), k=0.0, rho=0.0)
        with pytest.raises(DomainError):
            BvnSpec(h=0.0, k=0.0, rho=1.0)

    @settings(max_examples=200, deadline=None)
    @given(
        h=st.floats(-6, 6),
        k=st.floats(-6, 6),
        rho=st.floats(-0.9995, 0.9995),
    )
    def test_frechet_bounds(self, h, k, rho):
        value = bvn_cdf(h, k, rho)
        lo = max(0.0, std_cdf(h) + std_cdf(k) - 1.0)
        hi = min(std_cdf(h), std_cdf(k))
        assert lo - 1e-12 <= value <= hi + 1e-12


class TestBvnGeneral:
    def test_at_mean_identity(self):
        assert bvn_cdf_general(0.0, 0.0, (0.0, 0.0), np.eye(2)) == pytest.approx(0.25, abs=1e-14)

    def test_product_case(self):
        # frozen: Phi(1) * Phi(0) at 40 digits
        value = bvn_cdf_general(3.0, 0.5, (1.0, 0.5), np.diag([4.0, 1.0]))
        assert value == pytest.approx(0.42067237303427145, abs=1e-13)

    def test_near_singular(self, rng):
        rho = 0.999
        cov = np.array([[2.0, rho * np.sqrt(2 * 0.5)], [rho * np.sqrt(2 * 0.5), 0.5]])
        for _ in range(25):
            x1, x2 = rng.normal(0, 1, 2)
            h = x1 / np.sqrt(2.0)
            k = x2 / np.sqrt(0.5)
            expected = bvn_quad_oracle(h, k, rho)
            assert bvn_cdf_general(x1, x2, (0.0, 0.0), cov) == pytest.approx(expected, abs=1e-8)

    def test_non_pd_cov(self):
        with pytest.raises(DomainError):
            bvn_cdf_general(0.0, 0.0, (0.0, 0.0), np.array([[1.0, 2.0], [2.0, 1.0]]))
        with pytest.raises(DomainError):
            bvn_cdf_general(0.0, 0.0, (0.0, 0.0), np.array([[1.0, 0.1], [0.3, 1.0]]))


class TestBvnPartials:
    def test_origin(self):
        dh, dk = bvn_cdf_partials(0.0, 0.0, 0.0)
        # frozen: pdf(0) * Phi(0) at 40 digits
        assert dh == pytest.approx(0.19947114020071635, abs=1e-15)
        assert dk == pytest.approx(0.19947114020071635, abs=1e-15)

    def test_zero_shifted_args(self):
        dh, dk = bvn_cdf_partials(0.0, 0.0, 0.5)
        assert dh == pytest.approx(0.19947114020071635, abs=1e-13)
        assert dk == pytest.approx(0.19947114020071635, abs=1e-13)

    def test_matches_finite_differences(self, rng):
        eps = 1e-5
        for _ in range(200):
            h, k = rng.normal(0, 2, 2)
            rho = rng.uniform(-0.95, 0.95)
            dh, dk = bvn_cdf_partials(h, k, rho)
            fd_h = (bvn_cdf(h + eps, k, rho) - bvn_cdf(h - eps, k, rho)) / (2 * eps)
            fd_k = (bvn_cdf(h, k + eps, rho) - bvn_cdf(h, k - eps, rho)) / (2 * eps)
            assert dh == pytest.approx(fd_h, abs=1e-7)
            assert dk == pytest.approx(fd_k, abs=1e-7)

    def test_closed_form(self, rng):
        for _ in range(100):
            h, k = rng.normal(0, 2, 2)
            rho = rng.uniform(-0.99, 0.99)
            dh, _ = bvn_cdf_partials(h, k, rho)
            expected = std_pdf(h) * std_cdf((k - rho * h) / np.sqrt(1 - rho * rho))
            assert dh == pytest.approx(expected, rel=1e-12, abs=1e-300)

    def test_infinite_limits(self):
        dh, dk = bvn_cdf_partials(0.3, np.inf, 0.5)
        assert dh == pytest.approx(std_pdf(0.3), abs=1e-14)
        assert dk == 0.0
