"""Pairwise copula-parameter estimation and correlation-matrix repair."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from copmtl import synthgen
from copmtl.copula import CopulaParams, validate
from copmtl.errors import EstimationError
from copmtl.estimator import (
    EIG_FLOOR,
    WarmupOutputs,
    estimate_empirical,
    estimate_empirical_detailed,
    project_to_correlation,
    write_diagnostics,
)


def _warmup_from(rng, n=2000):
    return WarmupOutputs(
        e1=rng.normal(0, 1.5, n),
        e2=rng.normal(0, 0.7, n),
        qhat1=rng.normal(0, 1, n),
        qhat2=rng.normal(0, 1, n),
    )


class TestEstimateEmpirical:
    def test_perfect_correlation_is_clamped(self, rng):
        e = rng.normal(0, 1, 500)
        w = WarmupOutputs(e1=e, e2=e.copy(), qhat1=rng.normal(0, 1, 500), qhat2=rng.normal(0, 1, 500))
        params = estimate_empirical(w)
        assert params.gamma[0, 1] <= 0.99
        assert not validate(params)

    def test_independent_series_near_zero(self, rng):
        w = _warmup_from(rng, n=100_000)
        params = estimate_empirical(w)
        off = params.gamma[~np.eye(4, dtype=bool)]
        assert np.all(np.abs(off) <= 0.02)

    def test_recovers_truth_on_generator_data(self, rng):
        spec = synthgen.make_latent_spec()
        ds = synthgen.gen_latent_model(spec, 100_000, seed=77)
        means = synthgen.oracle_means(ds.x_left, ds.x_right, ds.truth)
        w = WarmupOutputs(
            e1=ds.labels[:, 0] - means[:, 0],
            e2=ds.labels[:, 2] - means[:, 1],
            qhat1=means[:, 2],
            qhat2=means[:, 3],
        )
        params = estimate_empirical(w)
        truth = ds.truth.params
        assert params.sigma1 == pytest.approx(truth.sigma1, rel=0.02)
        assert params.sigma2 == pytest.approx(truth.sigma2, rel=0.02)
        assert params.gamma[0, 1] == pytest.approx(truth.gamma[0, 1], abs=0.02)
        assert params.gamma[2, 3] == pytest.approx(truth.gamma[2, 3], abs=0.02)

    def test_constant_series_raises(self, rng):
        w = _warmup_from(rng, n=100)
        w.e1[:] = 2.5
        with pytest.raises(EstimationError, match="zero variance"):
            estimate_empirical(w)

    def test_too_short(self, rng):
        with pytest.raises(EstimationError):
            WarmupOutputs(e1=[1.0, 2.0], e2=[1.0, 2.0], qhat1=[0.0, 1.0], qhat2=[0.0, 1.0])

    def test_scale_equivariance(self, rng):
        w = _warmup_from(rng)
        base = estimate_empirical(w)
        scaled = estimate_empirical(
            WarmupOutputs(e1=3.0 * w.e1, e2=w.e2, qhat1=w.qhat1, qhat2=w.qhat2)
        )
        assert scaled.sigma1 == pytest.approx(3.0 * base.sigma1, rel=1e-12)
        assert scaled.sigma2 == base.sigma2
        np.testing.assert_allclose(scaled.gamma, base.gamma, rtol=0, atol=1e-12)

    def test_diagnostics_and_clamps(self, rng, tmp_path):
        w = _warmup_from(rng, n=500)
        w.qhat1[:10] = 40.0  # sigmoid saturates; probability clamp must fire
        diag = estimate_empirical_detailed(w)
        assert any("clamped" in e for e in diag.clamp_events)
        assert diag.gamma_raw.shape == (4, 4)
        write_diagnostics(tmp_path / "diag.txt", diag)
        text = (tmp_path / "diag.txt").read_text()
        assert "gamma_raw" in text and "gamma_projected" in text

    def test_root_n_shrinkage(self):
        # error factor between n=400 and n=6400 should track sqrt(16) = 4
        spec = synthgen.make_latent_spec()
        sigma1_true = synthgen.implied_truth(spec).params.sigma1
        medians = {}
        for n in (400, 6400):
            errs = []
            for rep in range(100):
                seed = int(np.random.SeedSequence((5, n, rep)).generate_state(1)[0])
                ds = synthgen.gen_latent_model(spec, n, seed)
                means = synthgen.oracle_means(ds.x_left, ds.x_right, ds.truth)
                w = WarmupOutputs(
                    e1=ds.labels[:, 0] - means[:, 0],
                    e2=ds.labels[:, 2] - means[:, 1],
                    qhat1=means[:, 2],
                    qhat2=means[:, 3],
                )
                errs.append(abs(estimate_empirical(w).sigma1 - sigma1_true))
            medians[n] = np.median(errs)
        factor = medians[400] / medians[6400]
        assert 2.5 <= factor <= 6.5


class TestProjection:
    def test_idempotent_on_valid(self, rng):
        g = np.eye(4)
        g[0, 1] = g[1, 0] = 0.4
        g[2, 3] = g[3, 2] = -0.3
        out = project_to_correlation(g)
        np.testing.assert_array_equal(out, g)

    def test_identity_passthrough(self):
        np.testing.assert_array_equal(project_to_correlation(np.eye(4)), np.eye(4))

    def test_strong_mixed_signs(self):
        g = np.eye(4)
        for i, j, v in [(0, 1, 0.9), (0, 2, 0.9), (1, 2, 0.9), (0, 3, -0.9), (1, 3, -0.9), (2, 3, -0.9)]:
            g[i, j] = g[j, i] = v
        out = project_to_correlation(g)
        assert np.linalg.eigvalsh(out).min() >= EIG_FLOOR - 1e-12
        np.testing.assert_allclose(np.diag(out), 1.0, atol=1e-12)
        assert not validate(CopulaParams(1.0, 1.0, out))

    @settings(max_examples=150, deadline=None)
    @given(st.integers(0, 2**32 - 1))
    def test_fuzz_output_always_valid(self, seed):
        rng = np.random.default_rng(seed)
        raw = rng.uniform(-1.6, 1.6, (4, 4))
        raw = 0.5 * (raw + raw.T)
        np.fill_diagonal(raw, 1.0)
        out = project_to_correlation(raw)
        assert not validate(CopulaParams(1.0, 1.0, out))
        assert np.linalg.eigvalsh(out).min() >= EIG_FLOOR - 1e-12
        assert np.max(np.abs(out[~np.eye(4, dtype=bool)])) <= 0.99 + 1e-12
