"""Synthetic data generators and dataset file I/O.

Two generators:

* ``gen_block_images`` draws paired 72x72 block images whose pixel pairs are
  correlated across the two channels, with responses produced by fixed block
  operators plus correlated noise (the classification noise enters the
  Bernoulli rate, which is clamped to [0, 1]).
* ``gen_latent_model`` draws from a linear latent-representation model: each
  response has its own latent d0-vector centered at the channel's feature
  vector, the four latent blocks share a cross-block correlation structure,
  and binary responses are sign indicators of their latent index. The
  implied copula parameters are computed in closed form and attached as a
  ground-truth record.

Array conventions used across the package:
  labels  (n, 4): columns (y1, y2, y3, y4)
  means   (n, 4): columns (m1, m2, q1, q2)
  coef    rows in margin order: coefficients producing (m1, q1, m2, q2)
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field

import numpy as np

from .copula import CopulaParams
from .errors import ConfigError, DataFormatError
from .textio import read_csv, read_kv, write_csv, write_kv

GENERATOR_VERSION = "copmtl-synthgen-1"

IMAGE_SIDE = 72
BLOCK_SIDE = 24

# covariance of one (left pixel, right pixel) pair
_PIXEL_VAR = 0.25
_PIXEL_COV = 0.125

# noise covariance over (e1, e2, e3, e4) for the block-image responses
_BLOCK_NOISE_COV = np.array(
    [
        [1.0, 0.5, 0.5, 0.125],
        [0.5, 1.0, 0.125, 0.5],
        [0.5, 0.125, 1.0, 0.5],
        [0.125, 0.5, 0.5, 1.0],
    ]
)


@dataclass
class GroundTruth:
    """Closed-form truth attached to generated latent-model datasets.

    ``coef`` rows are the regression-parameterization coefficient vectors
    for (m1, q1, m2, q2); note the binary rows are the negated generator
    directions because a latent index below zero produces label 1.
    """

    params: CopulaParams
    coef: np.ndarray


@dataclass
class Dataset:
    """In-memory dataset: labels plus one covariate group per channel."""

    kind: str  # "features" | "images"
    labels: np.ndarray
    x_left: np.ndarray
    x_right: np.ndarray
    seed: int
    truth: GroundTruth | None = None

    @property
    def n(self) -> int:
        return self.labels.shape[0]


@dataclass
class LatentModelSpec:
    """Configuration of the latent-representation generator.

    The four latent blocks (one per response, order y1, y2, y3, y4) have an
    isotropic within-block scale: sigma_1a / sigma_2a for the continuous
    blocks and 1/||beta|| for the binary blocks (so the binary latent index
    has unit conditional variance). ``cross_corr`` holds the cross-block
    correlation knobs; ``sigma_eps`` is the 2x2 continuous-noise covariance;
    ``feature_corr`` couples the two channels' feature vectors.
    """

    beta1: np.ndarray
    beta2: np.ndarray
    beta3: np.ndarray
    beta4: np.ndarray
    sigma_1a: float = 1.0
    sigma_2a: float = 1.0
    cross_corr: np.ndarray = field(default_factory=lambda: np.eye(4))
    sigma_eps: np.ndarray = field(default_factory=lambda: 0.25 * np.eye(2))
    feature_corr: float = 0.5

    def __post_init__(self):
        for name in ("beta1", "beta2", "beta3", "beta4"):
            setattr(self, name, np.asarray(getattr(self, name), dtype=float).ravel())
        d0 = self.beta1.size
        if any(getattr(self, f"beta{k}").size != d0 for k in (2, 3, 4)):
            raise ConfigError("all beta vectors must share one dimension")
        if any(np.linalg.norm(getattr(self, f"beta{k}")) == 0.0 for k in (1, 2, 3, 4)):
            raise ConfigError("beta vectors must be nonzero")
        if not (self.sigma_1a > 0 and self.sigma_2a > 0):
            raise ConfigError("within-block scales must be positive")
        self.cross_corr = np.asarray(self.cross_corr, dtype=float).reshape(4, 4)
        if np.max(np.abs(self.cross_corr - self.cross_corr.T)) > 1e-12:
            raise ConfigError("cross_corr must be symmetric")
        if np.max(np.abs(np.diag(self.cross_corr) - 1.0)) > 1e-12:
            raise ConfigError("cross_corr must have unit diagonal")
        if np.linalg.eigvalsh(self.cross_corr).min() <= 0:
            raise ConfigError("cross_corr must be positive definite (implied latent covariance)")
        self.sigma_eps = np.asarray(self.sigma_eps, dtype=float).reshape(2, 2)
        if np.linalg.eigvalsh(0.5 * (self.sigma_eps + self.sigma_eps.T)).min() <= 0:
            raise ConfigError("sigma_eps must be positive definite")
        if not -1.0 < self.feature_corr < 1.0:
            raise ConfigError("feature_corr must lie in (-1, 1)")

    @property
    def d0(self) -> int:
        return self.beta1.size

    def block_scales(self) -> np.ndarray:
        """Isotropic scale of each latent block (order y1, y2, y3, y4)."""
        return np.array(
            [
                self.sigma_1a,
                1.0 / np.linalg.norm(self.beta2),
                self.sigma_2a,
                1.0 / np.linalg.norm(self.beta4),
            ]
        )


def _unit(v) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    return v / np.linalg.norm(v)


def make_latent_spec(
    d0: int = 3,
    rho_cont: float = 0.6,
    rho_bin: float = 0.5,
    rho_mixed: float = 0.0,
    feature_corr: float = 0.5,
    sigma_a: float = 1.0,
    sigma_b: float = 0.5,
    eps_corr: float = 0.6,
) -> LatentModelSpec:
    """Convenience builder with well-aligned unit-norm coefficient vectors.

    ``rho_cont`` couples the two continuous latent blocks, ``rho_bin`` the
    two binary blocks, ``rho_mixed`` every continuous/binary block pair.
    """
    idx = np.arange(d0, dtype=float)
    beta1 = _unit(1.0 / (1.0 + 0.5 * idx))
    beta3 = _unit(1.0 / (1.0 + 0.6 * idx))
    beta2 = _unit(np.ones(d0))
    beta4 = _unit(1.0 + 0.2 * np.sin(1.0 + idx))
    r = np.eye(4)
    r[0, 2] = r[2, 0] = rho_cont
    r[1, 3] = r[3, 1] = rho_bin
    for i, j in ((0, 1), (0, 3), (2, 1), (2, 3)):
        r[i, j] = r[j, i] = rho_mixed
    sigma_eps = sigma_b**2 * np.array([[1.0, eps_corr], [eps_corr, 1.0]])
    return LatentModelSpec(
        beta1=beta1,
        beta2=beta2,
        beta3=beta3,
        beta4=beta4,
        sigma_1a=sigma_a,
        sigma_2a=sigma_a,
        cross_corr=r,
        sigma_eps=sigma_eps,
        feature_corr=feature_corr,
    )


def independent_latent_spec(d0: int = 3, sigma_b: float = 0.5) -> LatentModelSpec:
    """Null design: no cross-block, no noise, and no feature coupling, so
    the implied copula is exactly independent and the pairwise estimator's
    probability limits coincide with the truth."""
    return make_latent_spec(
        d0=d0,
        rho_cont=0.0,
        rho_bin=0.0,
        rho_mixed=0.0,
        feature_corr=0.0,
        sigma_b=sigma_b,
        eps_corr=0.0,
    )


def implied_truth(spec: LatentModelSpec) -> GroundTruth:
    """Closed-form copula parameters and coefficient targets of a spec."""
    c = spec.block_scales()
    r = spec.cross_corr
    se = spec.sigma_eps
    b1, b2, b3, b4 = spec.beta1, spec.beta2, spec.beta3, spec.beta4
    sigma1 = np.sqrt(c[0] ** 2 * b1 @ b1 + se[0, 0])
    sigma2 = np.sqrt(c[2] ** 2 * b3 @ b3 + se[1, 1])
    gamma = np.eye(4)
    gamma[0, 1] = gamma[1, 0] = (r[0, 2] * c[0] * c[2] * (b1 @ b3) + se[0, 1]) / (sigma1 * sigma2)
    gamma[0, 2] = gamma[2, 0] = -r[0, 1] * c[0] * c[1] * (b1 @ b2) / sigma1
    gamma[0, 3] = gamma[3, 0] = -r[0, 3] * c[0] * c[3] * (b1 @ b4) / sigma1
    gamma[1, 2] = gamma[2, 1] = -r[2, 1] * c[2] * c[1] * (b3 @ b2) / sigma2
    gamma[1, 3] = gamma[3, 1] = -r[2, 3] * c[2] * c[3] * (b3 @ b4) / sigma2
    gamma[2, 3] = gamma[3, 2] = r[1, 3] * c[1] * c[3] * (b2 @ b4)
    coef = np.vstack([b1, -b2, b3, -b4])
    return GroundTruth(params=CopulaParams(sigma1, sigma2, gamma), coef=coef)


def oracle_means(features_left: np.ndarray, features_right: np.ndarray, truth: GroundTruth) -> np.ndarray:
    """True conditional means (n, 4) = (m1, m2, q1, q2) from the features."""
    m1 = features_left @ truth.coef[0]
    q1 = features_left @ truth.coef[1]
    m2 = features_right @ truth.coef[2]
    q2 = features_right @ truth.coef[3]
    return np.column_stack([m1, m2, q1, q2])


def gen_latent_model(spec: LatentModelSpec, n: int, seed: int) -> Dataset:
    """Draw n samples from the latent-representation model.

    Draw order is fixed (features, latent deviations, continuous noise) so
    output is fully determined by (spec, n, seed).
    """
    if n < 1:
        raise ConfigError("n must be >= 1")
    rng = np.random.default_rng(seed)
    d0 = spec.d0
    z_a = rng.standard_normal((n, d0))
    z_b = rng.standard_normal((n, d0))
    f_left = z_a
    f_right = spec.feature_corr * z_a + np.sqrt(1.0 - spec.feature_corr**2) * z_b

    c = spec.block_scales()
    block_cov = np.outer(c, c) * spec.cross_corr
    chol = np.linalg.cholesky(block_cov)
    dev = rng.standard_normal((n, d0, 4)) @ chol.T  # per-coordinate block deviations

    eps = rng.standard_normal((n, 2)) @ np.linalg.cholesky(spec.sigma_eps).T

    z1 = f_left + dev[:, :, 0]
    z2 = f_left + dev[:, :, 1]
    z3 = f_right + dev[:, :, 2]
    z4 = f_right + dev[:, :, 3]
    y1 = z1 @ spec.beta1 + eps[:, 0]
    y2 = (z2 @ spec.beta2 <= 0.0).astype(float)
    y3 = z3 @ spec.beta3 + eps[:, 1]
    y4 = (z4 @ spec.beta4 <= 0.0).astype(float)
    labels = np.column_stack([y1, y2, y3, y4])
    return Dataset(
        kind="features",
        labels=labels,
        x_left=f_left,
        x_right=f_right,
        seed=int(seed),
        truth=implied_truth(spec),
    )


# ----------------------------------------------------------- block images


def _block_operator_sums(images: np.ndarray, block_range: int) -> tuple[np.ndarray, np.ndarray]:
    """Regression and classification block-operator sums per sample.

    Only the top-left ``block_range`` x ``block_range`` pixels of each
    contributing block enter the operators (the full-block variant uses
    block_range=24).
    """
    r = block_range
    blk = lambda t, s: images[:, BLOCK_SIDE * t : BLOCK_SIDE * t + r, BLOCK_SIDE * s : BLOCK_SIDE * s + r]
    s11 = np.tanh(blk(0, 0)).sum(axis=(1, 2))
    s22 = blk(1, 1).sum(axis=(1, 2))
    s33 = np.tanh(blk(2, 2).sum(axis=(1, 2)))
    return s11 + s22 + s33, s22


def gen_block_images(n: int, seed: int, block_range: int = 3) -> Dataset:
    """Draw n paired block images with mixed responses.

    Pixel pairs are bivariate normal with correlation 0.5 across channels;
    the (3,3) block is bright (mean 0.5), all others dark (mean 0). The
    binary responses are Bernoulli with rate sigmoid(classification sum)
    plus a correlated noise component, clamped to [0, 1].
    """
    if n < 1:
        raise ConfigError("n must be >= 1")
    if block_range not in (3, BLOCK_SIDE):
        raise ConfigError("block_range must be 3 (literal operators) or 24 (full blocks)")
    rng = np.random.default_rng(seed)
    a = rng.standard_normal((n, IMAGE_SIDE, IMAGE_SIDE))
    b = rng.standard_normal((n, IMAGE_SIDE, IMAGE_SIDE))
    mean = np.zeros((IMAGE_SIDE, IMAGE_SIDE))
    mean[2 * BLOCK_SIDE :, 2 * BLOCK_SIDE :] = 0.5
    sd = np.sqrt(_PIXEL_VAR)
    cross = _PIXEL_COV / sd
    resid = np.sqrt(_PIXEL_VAR - cross**2)
    x_left = (mean + sd * a).astype(np.float32)
    x_right = (mean + cross * a + resid * b).astype(np.float32)

    noise = rng.standard_normal((n, 4)) @ np.linalg.cholesky(_BLOCK_NOISE_COV).T
    u_left = rng.uniform(size=n)
    u_right = rng.uniform(size=n)

    reg_left, cls_left = _block_operator_sums(x_left.astype(np.float64), block_range)
    reg_right, cls_right = _block_operator_sums(x_right.astype(np.float64), block_range)
    y1 = reg_left + noise[:, 0]
    y3 = reg_right + noise[:, 2]
    rate_left = np.clip(1.0 / (1.0 + np.exp(-cls_left)) + noise[:, 1], 0.0, 1.0)
    rate_right = np.clip(1.0 / (1.0 + np.exp(-cls_right)) + noise[:, 3], 0.0, 1.0)
    y2 = (u_left < rate_left).astype(float)
    y4 = (u_right < rate_right).astype(float)
    labels = np.column_stack([y1, y2, y3, y4])
    return Dataset(
        kind="images", labels=labels, x_left=x_left, x_right=x_right, seed=int(seed)
    )


# -------------------------------------------------------------- dataset IO

_LABEL_COLUMNS = ("y1", "y2", "y3", "y4")


def write_dataset(path, data: Dataset) -> None:
    """Write a dataset directory: labels/features CSV, image payloads as raw
    little-endian float32 with a sidecar, and the truth record if present."""
    os.makedirs(path, exist_ok=True)
    meta: dict[str, object] = {
        "generator": GENERATOR_VERSION,
        "kind": data.kind,
        "n": data.n,
        "seed": data.seed,
    }
    rows = []
    if data.kind == "features":
        d_left = data.x_left.shape[1]
        d_right = data.x_right.shape[1]
        meta["feature_dim_left"] = d_left
        meta["feature_dim_right"] = d_right
        columns = list(_LABEL_COLUMNS) + [f"xl_{j}" for j in range(d_left)] + [
            f"xr_{j}" for j in range(d_right)
        ]
        for i in range(data.n):
            row = {c: float(v) for c, v in zip(_LABEL_COLUMNS, data.labels[i])}
            row.update({f"xl_{j}": float(data.x_left[i, j]) for j in range(d_left)})
            row.update({f"xr_{j}": float(data.x_right[i, j]) for j in range(d_right)})
            rows.append(row)
    elif data.kind == "images":
        height, width = data.x_left.shape[1:]
        meta.update(
            {
                "height": height,
                "width": width,
                "layout": "sample-major,row-major",
                "dtype": "float32-le",
                "payload_left": "images_left.f32",
                "payload_right": "images_right.f32",
                "payload_bytes_each": data.n * height * width * 4,
            }
        )
        for name, tensor in (("images_left.f32", data.x_left), ("images_right.f32", data.x_right)):
            with open(os.path.join(path, name), "wb") as fh:
                fh.write(np.ascontiguousarray(tensor, dtype="<f4").tobytes())
        columns = list(_LABEL_COLUMNS) + ["image_row", "left_file", "right_file"]
        for i in range(data.n):
            row = {c: float(v) for c, v in zip(_LABEL_COLUMNS, data.labels[i])}
            row.update({"image_row": i, "left_file": "images_left.f32", "right_file": "images_right.f32"})
            rows.append(row)
    else:
        raise ConfigError(f"unknown dataset kind {data.kind!r}")
    write_csv(os.path.join(path, "dataset.csv"), columns, rows)
    write_kv(os.path.join(path, "meta.txt"), meta)
    if data.truth is not None:
        from .copula import write_params

        write_params(os.path.join(path, "truth_params.txt"), data.truth.params)
        coef_cols = ["margin"] + [f"c{j}" for j in range(data.truth.coef.shape[1])]
        coef_rows = [
            dict(
                margin=name,
                **{f"c{j}": float(v) for j, v in enumerate(data.truth.coef[i])},
            )
            for i, name in enumerate(("m1", "q1", "m2", "q2"))
        ]
        write_csv(os.path.join(path, "truth_coef.csv"), coef_cols, coef_rows)


def read_dataset(path) -> Dataset:
    """Read back a dataset directory; validates payload sizes byte-for-byte."""
    meta_path = os.path.join(path, "meta.txt")
    if not os.path.exists(meta_path):
        raise DataFormatError(f"{meta_path}: missing sidecar")
    meta = read_kv(meta_path)
    kind = meta.get("kind")
    n = int(meta["n"])
    columns, rows = read_csv(os.path.join(path, "dataset.csv"))
    if len(rows) != n:
        raise DataFormatError(
            f"{path}: sidecar declares n={n} but dataset.csv holds {len(rows)} rows"
        )
    labels = np.array(
        [[float(r[c]) for c in _LABEL_COLUMNS] for r in rows], dtype=float
    )
    if kind == "features":
        d_left = int(meta["feature_dim_left"])
        d_right = int(meta["feature_dim_right"])
        x_left = np.array([[float(r[f"xl_{j}"]) for j in range(d_left)] for r in rows])
        x_right = np.array([[float(r[f"xr_{j}"]) for j in range(d_right)] for r in rows])
    elif kind == "images":
        height = int(meta["height"])
        width = int(meta["width"])
        expected = n * height * width * 4
        declared = int(meta["payload_bytes_each"])
        if declared != expected:
            raise DataFormatError(
                f"{path}: sidecar payload_bytes_each={declared} inconsistent with "
                f"n*height*width*4={expected}"
            )
        tensors = []
        for key in ("payload_left", "payload_right"):
            payload_path = os.path.join(path, meta[key])
            with open(payload_path, "rb") as fh:
                raw = fh.read()
            if len(raw) != expected:
                raise DataFormatError(
                    f"{payload_path}: expected {expected} bytes, got {len(raw)}"
                )
            tensors.append(np.frombuffer(raw, dtype="<f4").reshape(n, height, width).copy())
        x_left, x_right = tensors
    else:
        raise DataFormatError(f"{path}: unknown dataset kind {kind!r}")

    truth = None
    truth_path = os.path.join(path, "truth_params.txt")
    if os.path.exists(truth_path):
        from .copula import read_params

        params = read_params(truth_path)
        _, coef_rows = read_csv(os.path.join(path, "truth_coef.csv"))
        width = len(coef_rows[0]) - 1
        coef = np.array(
            [[float(row[f"c{j}"]) for j in range(width)] for row in coef_rows]
        )
        truth = GroundTruth(params=params, coef=coef)
    return Dataset(
        kind=kind,
        labels=labels,
        x_left=x_left,
        x_right=x_right,
        seed=int(meta.get("seed", 0)),
        truth=truth,
    )
