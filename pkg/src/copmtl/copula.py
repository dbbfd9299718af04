"""Joint log density of two continuous + two binary responses coupled by a
4-dim Gaussian copula, with analytic gradients and the dataset-level loss.

Latent coordinate order everywhere: (standardized y1, standardized y3,
probit latent for y2, probit latent for y4). The binary pair, conditional on
the continuous pair, is bivariate normal with mean ``A @ standardized
residuals`` and covariance the Schur complement of the continuous block of
the correlation matrix; its four quadrant probabilities supply the discrete
part of the density.

All computational entry points have a single-sample dataclass form and a
vectorized array core (functions suffixed ``_batch``). Everything is pure;
batch reductions run in fixed sample order so results are bit-reproducible.
"""

from __future__ import annotations

from dataclasses import dataclass
import numpy as np

from .errors import ConfigError, UsageError
from .normals import bvn_cdf, std_cdf
from .textio import format_float, kv_float, kv_floats, read_kv, write_kv

# Quadrant probabilities are clamped here before taking logs; gradients at
# the floor divide by the clamped value.
PROB_FLOOR = 1e-300

_SQRT_2PI = 2.5066282746310002


@dataclass
class CopulaParams:
    """Marginal SDs of the two continuous responses plus the 4x4 latent
    correlation matrix (order: std y1, std y3, latent y2, latent y4)."""

    sigma1: float
    sigma2: float
    gamma: np.ndarray

    def __post_init__(self):
        self.sigma1 = float(self.sigma1)
        self.sigma2 = float(self.sigma2)
        self.gamma = np.array(self.gamma, dtype=float).reshape(4, 4)

    @classmethod
    def independent(cls, sigma1: float = 1.0, sigma2: float = 1.0) -> "CopulaParams":
        return cls(sigma1, sigma2, np.eye(4))


@dataclass(frozen=True)
class MarginalMeans:
    """Conditional means for one sample: m1/m2 are the continuous means of
    y1/y3, q1/q2 the probit latent means of y2/y4."""

    m1: float
    m2: float
    q1: float
    q2: float

    def as_array(self) -> np.ndarray:
        return np.array([self.m1, self.m2, self.q1, self.q2], dtype=float)


@dataclass(frozen=True)
class MixedLabel:
    """One observed response vector; y2 and y4 must be 0 or 1."""

    y1: float
    y2: int
    y3: float
    y4: int

    def __post_init__(self):
        if self.y2 not in (0, 1) or self.y4 not in (0, 1):
            raise ConfigError("binary labels must be 0 or 1")

    def as_array(self) -> np.ndarray:
        return np.array([self.y1, self.y2, self.y3, self.y4], dtype=float)


@dataclass(frozen=True)
class ConditionalLatent:
    """Conditional distribution of the two binary latents given the
    continuous observations: a bivariate normal (mean, cov)."""

    mean: np.ndarray
    cov: np.ndarray


def validate(params: CopulaParams) -> list[str]:
    """Return every violated invariant as a message; empty list means ok."""
    violations = []
    if not params.sigma1 > 0:
        violations.append("sigma1 not positive")
    if not params.sigma2 > 0:
        violations.append("sigma2 not positive")
    g = params.gamma
    if g.shape != (4, 4):
        violations.append("gamma not 4x4")
        return violations
    if not np.all(np.isfinite(g)):
        violations.append("gamma has non-finite entries")
        return violations
    if np.max(np.abs(g - g.T)) > 1e-12:
        violations.append("gamma not symmetric")
    if np.max(np.abs(np.diag(g) - 1.0)) > 1e-12:
        violations.append("gamma diagonal not all 1")
    off = g[~np.eye(4, dtype=bool)]
    if np.any(np.abs(off) >= 1.0):
        violations.append("gamma off-diagonal magnitude not below 1")
    min_eig = float(np.linalg.eigvalsh(0.5 * (g + g.T)).min())
    if min_eig <= 0.0:
        violations.append(f"gamma not positive definite (min eigenvalue {min_eig:.3e})")
    return violations


def _require_valid(params: CopulaParams) -> None:
    violations = validate(params)
    if violations:
        raise ConfigError("invalid copula parameters: " + "; ".join(violations))


class _Derived:
    """Per-parameter quantities shared by density and gradient evaluation."""

    def __init__(self, params: CopulaParams):
        g = params.gamma
        self.sigma1 = params.sigma1
        self.sigma2 = params.sigma2
        self.rho12 = g[0, 1]
        det11 = 1.0 - self.rho12 ** 2
        inv11 = np.array([[1.0, -self.rho12], [-self.rho12, 1.0]]) / det11
        self.coef = g[2:, :2] @ inv11           # maps standardized residuals to latent mean
        self.cond_cov = g[2:, 2:] - self.coef @ g[:2, 2:]
        self.s1 = np.sqrt(self.cond_cov[0, 0])
        self.s2 = np.sqrt(self.cond_cov[1, 1])
        self.r = self.cond_cov[0, 1] / (self.s1 * self.s2)
        self.log_norm = np.log(2.0 * np.pi * self.sigma1 * self.sigma2 * np.sqrt(det11))
        self.det11 = det11


def conditional_latent(label: MixedLabel, means: MarginalMeans, params: CopulaParams) -> ConditionalLatent:
    """Distribution of the binary-pair latents given the continuous pair."""
    _require_valid(params)
    d = _Derived(params)
    e = np.array(
        [(label.y1 - means.m1) / d.sigma1, (label.y3 - means.m2) / d.sigma2]
    )
    return ConditionalLatent(mean=d.coef @ e, cov=d.cond_cov.copy())


def quadrant_prob(y2: int, y4: int, q1: float, q2: float, cond: ConditionalLatent) -> float:
    """P(y2, y4 | continuous pair) for one quadrant of the conditional
    bivariate normal.

    Equals the orthant decomposition P(0,0)=F12, P(0,1)=F1-F12,
    P(1,0)=F2-F12, P(1,1)=1-F1-F2+F12 (F1, F2 the univariate conditional
    CDFs at -q1, -q2 and F12 their joint CDF), computed here as a single
    sign-flipped joint CDF so small probabilities keep full precision.
    """
    if y2 not in (0, 1) or y4 not in (0, 1):
        raise ConfigError("binary labels must be 0 or 1")
    s1 = np.sqrt(cond.cov[0, 0])
    s2 = np.sqrt(cond.cov[1, 1])
    r = cond.cov[0, 1] / (s1 * s2)
    h = (-q1 - cond.mean[0]) / s1
    k = (-q2 - cond.mean[1]) / s2
    sa = 1.0 - 2.0 * y2
    sb = 1.0 - 2.0 * y4
    return float(np.clip(bvn_cdf(sa * h, sb * k, sa * sb * r), 0.0, 1.0))


def _quadrant_batch(y2, y4, h, k, r):
    """Vectorized quadrant probabilities at standardized limits h, k."""
    sa = 1.0 - 2.0 * y2
    sb = 1.0 - 2.0 * y4
    return np.clip(bvn_cdf(sa * h, sb * k, sa * sb * r), 0.0, 1.0), sa, sb


def _split(labels, means):
    y = np.asarray(labels, dtype=float)
    m = np.asarray(means, dtype=float)
    if y.ndim != 2 or y.shape[1] != 4 or m.shape != y.shape:
        raise UsageError("labels and means must both have shape (n, 4)")
    return y[:, 0], y[:, 1], y[:, 2], y[:, 3], m[:, 0], m[:, 1], m[:, 2], m[:, 3]


def log_density_batch(labels, means, params: CopulaParams) -> np.ndarray:
    """Joint log density per sample; labels and means are (n, 4) arrays
    (label columns y1, y2, y3, y4; mean columns m1, m2, q1, q2)."""
    _require_valid(params)
    d = _Derived(params)
    y1, y2, y3, y4, m1, m2, q1, q2 = _split(labels, means)
    e1 = (y1 - m1) / d.sigma1
    e2 = (y3 - m2) / d.sigma2
    quad_form = (e1 * e1 - 2.0 * d.rho12 * e1 * e2 + e2 * e2) / (2.0 * d.det11)
    cont = -quad_form - d.log_norm
    mt1 = d.coef[0, 0] * e1 + d.coef[0, 1] * e2
    mt2 = d.coef[1, 0] * e1 + d.coef[1, 1] * e2
    h = (-q1 - mt1) / d.s1
    k = (-q2 - mt2) / d.s2
    prob, _, _ = _quadrant_batch(y2, y4, h, k, d.r)
    return cont + np.log(np.maximum(prob, PROB_FLOOR))


def grad_log_density_batch(labels, means, params: CopulaParams) -> np.ndarray:
    """Gradient of the per-sample log density with respect to
    (m1, m2, q1, q2); shape (n, 4).

    Includes both the direct continuous terms and the dependence of the
    conditional latent mean on the standardized residuals.
    """
    _require_valid(params)
    d = _Derived(params)
    y1, y2, y3, y4, m1, m2, q1, q2 = _split(labels, means)
    e1 = (y1 - m1) / d.sigma1
    e2 = (y3 - m2) / d.sigma2
    g_m1 = (e1 - d.rho12 * e2) / (d.sigma1 * d.det11)
    g_m2 = (e2 - d.rho12 * e1) / (d.sigma2 * d.det11)

    mt1 = d.coef[0, 0] * e1 + d.coef[0, 1] * e2
    mt2 = d.coef[1, 0] * e1 + d.coef[1, 1] * e2
    h = (-q1 - mt1) / d.s1
    k = (-q2 - mt2) / d.s2
    prob, sa, sb = _quadrant_batch(y2, y4, h, k, d.r)
    prob = np.maximum(prob, PROB_FLOOR)
    denom = np.sqrt(1.0 - d.r * d.r)
    pdf_h = np.exp(-0.5 * h * h) / _SQRT_2PI
    pdf_k = np.exp(-0.5 * k * k) / _SQRT_2PI
    dP_dh = sa * pdf_h * std_cdf(sb * (k - d.r * h) / denom)
    dP_dk = sb * pdf_k * std_cdf(sa * (h - d.r * k) / denom)
    dlog_dh = dP_dh / prob
    dlog_dk = dP_dk / prob

    # chain through h = (-q1 - mt1)/s1, k = (-q2 - mt2)/s2 and the residuals
    g_m1 = g_m1 + dlog_dh * d.coef[0, 0] / (d.sigma1 * d.s1) + dlog_dk * d.coef[1, 0] / (d.sigma1 * d.s2)
    g_m2 = g_m2 + dlog_dh * d.coef[0, 1] / (d.sigma2 * d.s1) + dlog_dk * d.coef[1, 1] / (d.sigma2 * d.s2)
    g_q1 = -dlog_dh / d.s1
    g_q2 = -dlog_dk / d.s2
    return np.column_stack([g_m1, g_m2, g_q1, g_q2])


def log_density(label: MixedLabel, means: MarginalMeans, params: CopulaParams) -> float:
    """Joint log density of one mixed response vector given its means."""
    value = log_density_batch(label.as_array()[None, :], means.as_array()[None, :], params)
    return float(value[0])


def grad_log_density(label: MixedLabel, means: MarginalMeans, params: CopulaParams) -> np.ndarray:
    """Gradient of log_density over (m1, m2, q1, q2) for one sample."""
    grad = grad_log_density_batch(label.as_array()[None, :], means.as_array()[None, :], params)
    return grad[0]


def _as_batch(labels, means):
    if isinstance(labels, np.ndarray):
        return np.asarray(labels, dtype=float), np.asarray(means, dtype=float)
    labels = list(labels)
    means = list(means)
    if labels and isinstance(labels[0], MixedLabel):
        labels = [lab.as_array() for lab in labels]
    if means and isinstance(means[0], MarginalMeans):
        means = [mm.as_array() for mm in means]
    return np.asarray(labels, dtype=float), np.asarray(means, dtype=float)


def copula_loss(labels, means, params: CopulaParams) -> tuple[float, np.ndarray]:
    """Negative joint log likelihood of a batch plus its gradient with
    respect to each sample's four outputs.

    ``labels``/``means`` are (n, 4) arrays or parallel sequences of
    MixedLabel/MarginalMeans. The sum runs in fixed sample order.
    """
    y, m = _as_batch(labels, means)
    if y.size == 0:
        raise UsageError("copula_loss requires a nonempty batch")
    loss = -float(np.sum(log_density_batch(y, m, params)))
    grads = -grad_log_density_batch(y, m, params)
    return loss, grads


def sample_labels(means, params: CopulaParams, rng: np.random.Generator) -> np.ndarray:
    """Draw one label vector per row of ``means`` from the joint model.

    The latent 4-vector is multivariate normal with correlation ``gamma``;
    continuous coordinates are scaled/shifted to (m1, m2), binary ones are
    indicators of the latents exceeding (-q1, -q2).
    """
    _require_valid(params)
    m = np.asarray(means, dtype=float)
    if m.ndim != 2 or m.shape[1] != 4:
        raise UsageError("means must have shape (n, 4)")
    chol = np.linalg.cholesky(params.gamma)
    w = rng.standard_normal((m.shape[0], 4)) @ chol.T
    y1 = m[:, 0] + params.sigma1 * w[:, 0]
    y3 = m[:, 1] + params.sigma2 * w[:, 1]
    y2 = (w[:, 2] >= -m[:, 2]).astype(float)
    y4 = (w[:, 3] >= -m[:, 3]).astype(float)
    return np.column_stack([y1, y2, y3, y4])


def write_params(path, params: CopulaParams) -> None:
    """Serialize parameters as a key/value document (gamma row-major)."""
    write_kv(
        path,
        {
            "sigma1": params.sigma1,
            "sigma2": params.sigma2,
            "gamma": ", ".join(format_float(v) for v in params.gamma.ravel()),
        },
    )


def read_params(path) -> CopulaParams:
    doc = read_kv(path)
    gamma = kv_floats(doc, "gamma", source=str(path))
    if len(gamma) != 16:
        raise ConfigError(f"{path}: gamma must hold 16 values, got {len(gamma)}")
    return CopulaParams(
        sigma1=kv_float(doc, "sigma1", source=str(path)),
        sigma2=kv_float(doc, "sigma2", source=str(path)),
        gamma=np.array(gamma).reshape(4, 4),
    )
