"""Generators against their distributional claims and dataset IO."""

import numpy as np
import pytest

from copmtl import synthgen
from copmtl.errors import ConfigError, DataFormatError
from copmtl.estimator import WarmupOutputs, estimate_empirical


@pytest.fixture(scope="module")
def dataset():
    return synthgen.gen_block_images(10_000, seed=42)


class TestBlockImages:
    def test_shapes_and_dtype(self, dataset):
        assert dataset.x_left.shape == (10_000, 72, 72)
        assert dataset.x_left.dtype == np.float32
        assert dataset.kind == "images"
        assert set(np.unique(dataset.labels[:, 1])) <= {0.0, 1.0}

    def test_bright_block_mean(self, dataset):
        bright = dataset.x_left[:, 48:, 48:]
        assert abs(float(bright.mean()) - 0.5) <= 0.02
        dark = dataset.x_left[:, :24, :24]
        assert abs(float(dark.mean())) <= 0.02

    def test_paired_pixel_correlation(self, dataset):
        # within one dark block every pixel pair shares mean zero, so the
        # pooled correlation estimates the pairwise 0.125/0.25 = 0.5
        left = dataset.x_left[:, :24, :24].ravel()
        right = dataset.x_right[:, :24, :24].ravel()
        corr = np.corrcoef(left, right)[0, 1]
        assert abs(corr - 0.5) <= 0.03
        bright_corr = np.corrcoef(
            dataset.x_left[:, 48:, 48:].ravel(), dataset.x_right[:, 48:, 48:].ravel()
        )[0, 1]
        assert abs(bright_corr - 0.5) <= 0.03

    def test_balanced_binary_labels(self, dataset):
        assert abs(dataset.labels[:, 1].mean() - 0.5) <= 0.03
        assert abs(dataset.labels[:, 3].mean() - 0.5) <= 0.03

    def test_determinism(self):
        a = synthgen.gen_block_images(50, seed=9)
        b = synthgen.gen_block_images(50, seed=9)
        np.testing.assert_array_equal(a.x_left, b.x_left)
        np.testing.assert_array_equal(a.labels, b.labels)

    def test_full_block_range(self):
        ds = synthgen.gen_block_images(200, seed=3, block_range=24)
        # full-range operators sum whole blocks, so responses are much larger
        assert ds.labels[:, 0].std() > 5.0

    def test_invalid_block_range(self):
        with pytest.raises(ConfigError):
            synthgen.gen_block_images(10, seed=0, block_range=5)


class TestLatentModel:
    def test_independent_design_implies_identity(self):
        spec = synthgen.independent_latent_spec()
        truth = synthgen.implied_truth(spec)
        np.testing.assert_allclose(truth.params.gamma, np.eye(4), atol=0)

    def test_conditional_covariance_closed_form(self, rng):
        # MC oracle at one fixed feature pair, diagonal noise so the display
        # Cov(y1, y3 | features) = beta1' Sigma13 beta3 is exact
        spec = synthgen.make_latent_spec(eps_corr=0.0)
        c = spec.block_scales()
        closed = spec.cross_corr[0, 2] * c[0] * c[2] * float(spec.beta1 @ spec.beta3)
        n = 1_000_000
        block_cov = np.outer(c, c) * spec.cross_corr
        chol = np.linalg.cholesky(block_cov)
        dev = rng.standard_normal((n, spec.d0, 4)) @ chol.T
        eps = rng.standard_normal((n, 2)) @ np.linalg.cholesky(spec.sigma_eps).T
        f_left = rng.normal(0, 1, spec.d0)
        f_right = rng.normal(0, 1, spec.d0)
        y1 = (f_left + dev[:, :, 0]) @ spec.beta1 + eps[:, 0]
        y3 = (f_right + dev[:, :, 2]) @ spec.beta3 + eps[:, 1]
        mc_cov = float(np.cov(y1, y3)[0, 1])
        se = np.sqrt((np.var(y1) * np.var(y3) + mc_cov**2) / n)
        assert abs(mc_cov - closed) <= 3 * se

    def test_marginal_sd_normalization(self, rng):
        # with unit-norm coefficients the marginal variance decomposes into
        # the within-block scale plus the noise variance
        spec = synthgen.make_latent_spec(sigma_a=1.0, sigma_b=0.5)
        assert np.linalg.norm(spec.beta1) == pytest.approx(1.0, abs=1e-12)
        truth = synthgen.implied_truth(spec)
        assert truth.params.sigma1 == pytest.approx(np.sqrt(1.0 + 0.25), abs=1e-12)
        ds = synthgen.gen_latent_model(spec, 200_000, seed=8)
        means = synthgen.oracle_means(ds.x_left, ds.x_right, ds.truth)
        resid_sd = float(np.std(ds.labels[:, 0] - means[:, 0], ddof=1))
        assert resid_sd == pytest.approx(truth.params.sigma1, rel=0.01)

    def test_estimator_recovers_implied_copula(self):
        spec = synthgen.make_latent_spec()
        ds = synthgen.gen_latent_model(spec, 150_000, seed=5)
        means = synthgen.oracle_means(ds.x_left, ds.x_right, ds.truth)
        est = estimate_empirical(
            WarmupOutputs(
                e1=ds.labels[:, 0] - means[:, 0],
                e2=ds.labels[:, 2] - means[:, 1],
                qhat1=means[:, 2],
                qhat2=means[:, 3],
            )
        )
        truth = ds.truth.params
        assert est.sigma1 == pytest.approx(truth.sigma1, rel=0.02)
        np.testing.assert_allclose(est.gamma, truth.gamma, atol=0.03)

    def test_determinism(self):
        spec = synthgen.make_latent_spec()
        a = synthgen.gen_latent_model(spec, 64, seed=123)
        b = synthgen.gen_latent_model(spec, 64, seed=123)
        np.testing.assert_array_equal(a.labels, b.labels)
        np.testing.assert_array_equal(a.x_left, b.x_left)

    def test_invalid_specs(self):
        with pytest.raises(ConfigError):
            synthgen.make_latent_spec(rho_cont=1.2)
        with pytest.raises(ConfigError):
            synthgen.LatentModelSpec(
                beta1=[1.0],
                beta2=[1.0],
                beta3=[1.0],
                beta4=[1.0],
                sigma_eps=np.array([[1.0, 2.0], [2.0, 1.0]]),
            )

    def test_binary_rate_calibration(self):
        spec = synthgen.make_latent_spec()
        ds = synthgen.gen_latent_model(spec, 100_000, seed=6)
        means = synthgen.oracle_means(ds.x_left, ds.x_right, ds.truth)
        from copmtl.normals import std_cdf

        # P(y2 = 1 | features) = Phi(q1): check calibration in bins of q1
        q = means[:, 2]
        for lo, hi in ((-1.5, -0.5), (-0.5, 0.5), (0.5, 1.5)):
            sel = (q >= lo) & (q < hi)
            expected = std_cdf(q[sel]).mean()
            observed = ds.labels[sel, 1].mean()
            assert abs(observed - expected) <= 3.5 / np.sqrt(sel.sum())


class TestDatasetIO:
    def test_features_roundtrip(self, tmp_path):
        ds = synthgen.gen_latent_model(synthgen.make_latent_spec(), 40, seed=2)
        path = tmp_path / "data"
        synthgen.write_dataset(path, ds)
        back = synthgen.read_dataset(path)
        np.testing.assert_array_equal(back.labels, ds.labels)
        np.testing.assert_array_equal(back.x_left, ds.x_left)
        np.testing.assert_array_equal(back.x_right, ds.x_right)
        assert back.truth.params.sigma1 == ds.truth.params.sigma1
        np.testing.assert_array_equal(back.truth.coef, ds.truth.coef)
        np.testing.assert_array_equal(back.truth.params.gamma, ds.truth.params.gamma)

    def test_images_roundtrip_bitwise(self, tmp_path):
        ds = synthgen.gen_block_images(30, seed=4)
        path = tmp_path / "imgs"
        synthgen.write_dataset(path, ds)
        back = synthgen.read_dataset(path)
        assert back.x_left.dtype == np.float32
        np.testing.assert_array_equal(back.x_left, ds.x_left)
        np.testing.assert_array_equal(back.x_right, ds.x_right)
        np.testing.assert_array_equal(back.labels, ds.labels)

    def test_write_is_deterministic(self, tmp_path):
        ds = synthgen.gen_block_images(12, seed=7)
        synthgen.write_dataset(tmp_path / "a", ds)
        synthgen.write_dataset(tmp_path / "b", ds)
        for name in ("dataset.csv", "meta.txt", "images_left.f32", "images_right.f32"):
            assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()

    def test_truncated_payload(self, tmp_path):
        ds = synthgen.gen_block_images(10, seed=1)
        path = tmp_path / "imgs"
        synthgen.write_dataset(path, ds)
        payload = path / "images_left.f32"
        blob = payload.read_bytes()
        payload.write_bytes(blob[:-100])
        with pytest.raises(DataFormatError, match=r"expected \d+ bytes, got \d+"):
            synthgen.read_dataset(path)

    def test_sidecar_payload_mismatch(self, tmp_path):
        ds = synthgen.gen_block_images(10, seed=1)
        path = tmp_path / "imgs"
        synthgen.write_dataset(path, ds)
        meta = (path / "meta.txt").read_text().replace("n: 10", "n: 11")
        (path / "meta.txt").write_text(meta)
        with pytest.raises(DataFormatError):
            synthgen.read_dataset(path)

    def test_missing_sidecar(self, tmp_path):
        with pytest.raises(DataFormatError):
            synthgen.read_dataset(tmp_path / "nothing")
