"""Empirical estimation of the copula parameter set from warm-up residuals
and fitted latent means, plus repair of the assembled correlation matrix.

The pairwise estimator is implemented exactly as specified: marginal SDs
from the continuous residuals, residual-residual correlation for the
continuous pair, correlation of fitted latent means for the binary pair,
and correlation of each residual series with -quantile(sigmoid(latent
mean)) for the four mixed pairs. Pairwise estimates need not be jointly
positive definite, so the assembled matrix is projected before use.

Note the mixed-pair and binary-pair estimators converge to association
induced by the fitted means, not to the residual latent correlation; an
oracle mode (passing externally known parameters straight through) is
provided for controlled experiments.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .copula import CopulaParams
from .errors import EstimationError
from .normals import std_quantile
from .textio import format_float, write_kv

OFFDIAG_CLAMP = 0.99
EIG_FLOOR = 1e-4
PROB_CLAMP = 1e-7


@dataclass
class WarmupOutputs:
    """Residuals and fitted latent means produced by a warm-up fit.

    e1/e2 are the continuous residual series for y1/y3; qhat1/qhat2 the
    fitted probit latent means for y2/y4. All series share length n >= 3.
    """

    e1: np.ndarray
    e2: np.ndarray
    qhat1: np.ndarray
    qhat2: np.ndarray

    def __post_init__(self):
        self.e1 = np.asarray(self.e1, dtype=float).ravel()
        self.e2 = np.asarray(self.e2, dtype=float).ravel()
        self.qhat1 = np.asarray(self.qhat1, dtype=float).ravel()
        self.qhat2 = np.asarray(self.qhat2, dtype=float).ravel()
        n = self.e1.size
        if n < 3:
            raise EstimationError("warm-up series need at least 3 samples")
        for name in ("e2", "qhat1", "qhat2"):
            if getattr(self, name).size != n:
                raise EstimationError("warm-up series must share one length")

    @property
    def n(self) -> int:
        return self.e1.size


@dataclass
class EstimateDiagnostics:
    """What estimate_empirical did: raw vs projected matrix, clamp events."""

    params: CopulaParams
    gamma_raw: np.ndarray
    gamma_projected: np.ndarray
    clamp_events: list[str] = field(default_factory=list)


def _sd(x: np.ndarray, name: str) -> float:
    value = float(np.std(x, ddof=1))
    if value == 0.0:
        raise EstimationError(f"zero variance: series {name} is constant")
    return value


def _corr(x: np.ndarray, y: np.ndarray, xname: str, yname: str) -> float:
    sx = _sd(x, xname)
    sy = _sd(y, yname)
    cov = float(np.sum((x - x.mean()) * (y - y.mean()))) / (x.size - 1)
    return cov / (sx * sy)


def _latent_transform(qhat: np.ndarray, clamp_events: list[str], name: str) -> np.ndarray:
    """-quantile(sigmoid(qhat)), with the probability clamped away from 0/1."""
    prob = 1.0 / (1.0 + np.exp(-qhat))
    clipped = np.clip(prob, PROB_CLAMP, 1.0 - PROB_CLAMP)
    n_clamped = int(np.sum(clipped != prob))
    if n_clamped:
        clamp_events.append(f"{name}: {n_clamped} probabilities clamped to [{PROB_CLAMP}, 1-{PROB_CLAMP}]")
    return -std_quantile(clipped)


def project_to_correlation(gamma_raw: np.ndarray) -> np.ndarray:
    """Repair a symmetric 4x4 matrix into a valid correlation matrix.

    Off-diagonals are clamped to [-0.99, 0.99], eigenvalues floored at
    1e-4, and the diagonal renormalized to 1. Renormalization can drag the
    smallest eigenvalue marginally below the floor again, so the
    clip/renormalize step repeats until the floor holds (a handful of
    passes at most). Idempotent on matrices that already satisfy all three
    conditions.
    """
    g = np.array(gamma_raw, dtype=float)
    g = 0.5 * (g + g.T)
    for _ in range(32):
        g = np.clip(g, -OFFDIAG_CLAMP, OFFDIAG_CLAMP)
        np.fill_diagonal(g, 1.0)
        lam, vec = np.linalg.eigh(g)
        if lam.min() >= EIG_FLOOR:
            return g
        g = (vec * np.maximum(lam, EIG_FLOOR)) @ vec.T
        d = np.sqrt(np.diag(g))
        g = g / np.outer(d, d)
        g = 0.5 * (g + g.T)
    return g


def estimate_empirical_detailed(w: WarmupOutputs) -> EstimateDiagnostics:
    """Pairwise copula-parameter estimates plus projection diagnostics."""
    clamp_events: list[str] = []
    sigma1 = _sd(w.e1, "e1")
    sigma2 = _sd(w.e2, "e2")
    t1 = _latent_transform(w.qhat1, clamp_events, "qhat1")
    t2 = _latent_transform(w.qhat2, clamp_events, "qhat2")

    raw = np.eye(4)
    raw[0, 1] = raw[1, 0] = _corr(w.e1, w.e2, "e1", "e2")
    raw[0, 2] = raw[2, 0] = _corr(w.e1, t1, "e1", "transform(qhat1)")
    raw[0, 3] = raw[3, 0] = _corr(w.e1, t2, "e1", "transform(qhat2)")
    raw[1, 2] = raw[2, 1] = _corr(w.e2, t1, "e2", "transform(qhat1)")
    raw[1, 3] = raw[3, 1] = _corr(w.e2, t2, "e2", "transform(qhat2)")
    raw[2, 3] = raw[3, 2] = _corr(w.qhat1, w.qhat2, "qhat1", "qhat2")

    projected = project_to_correlation(raw)
    if np.max(np.abs(projected - raw)) > 1e-12:
        clamp_events.append("gamma adjusted by correlation projection")
    params = CopulaParams(sigma1=sigma1, sigma2=sigma2, gamma=projected)
    return EstimateDiagnostics(
        params=params, gamma_raw=raw, gamma_projected=projected, clamp_events=clamp_events
    )


def estimate_empirical(w: WarmupOutputs) -> CopulaParams:
    """Copula parameters estimated from warm-up residuals and predictions."""
    return estimate_empirical_detailed(w).params


def write_diagnostics(path, diag: EstimateDiagnostics) -> None:
    write_kv(
        path,
        {
            "sigma1": diag.params.sigma1,
            "sigma2": diag.params.sigma2,
            "gamma_raw": ", ".join(format_float(v) for v in diag.gamma_raw.ravel()),
            "gamma_projected": ", ".join(format_float(v) for v in diag.gamma_projected.ravel()),
            "clamp_events": "; ".join(diag.clamp_events) if diag.clamp_events else "none",
        },
    )
