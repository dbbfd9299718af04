"""Loss definitions and training: the empirical loss (squared error plus
probit cross-entropy), the three-stage feasible training loop for the
bi-channel model, and full-batch linear fitters for the theory experiments.

Stage 1 minimizes the empirical loss from scratch, stage 2 estimates the
copula parameters from stage-1 residuals and fitted latents, and stage 3
continues (warm start by default) under the copula loss with the estimated
parameters frozen. Everything is deterministic given the config seed.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize
from scipy.special import log_ndtr

from . import copula as cop
from . import estimator
from .errors import ConfigError, EstimationError, TrainingError, UsageError
from .model import BiChannelModel, EncoderSpec, HeadSpec, init_model
from .textio import write_csv

_SQRT_2PI = 2.5066282746310002


@dataclass
class TrainConfig:
    """Optimizer and schedule settings for the staged training loop."""

    epochs_per_stage: int = 50
    batch_size: int = 128
    lr_stage1: float = 1e-3
    lr_stage3: float = 1e-4
    lr_decay: float = 0.9
    decay_every_stage1: int = 4
    decay_every_stage3: int = 2
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    seed: int = 0
    freeze_encoder_stage3: bool = False
    restart_stage3: bool = False

    def __post_init__(self):
        counts = (
            self.epochs_per_stage,
            self.batch_size,
            self.decay_every_stage1,
            self.decay_every_stage3,
        )
        if any(int(c) <= 0 for c in counts):
            raise ConfigError("epoch/batch/decay counts must be positive")
        rates = (self.lr_stage1, self.lr_stage3, self.lr_decay)
        if any(not 0.0 < r <= 1.0 for r in rates):
            raise ConfigError("learning rates and decay must lie in (0, 1]")


@dataclass
class TraceRow:
    epoch: int
    stage: int
    loss: float
    lr: float


TRACE_COLUMNS = ("epoch", "stage", "loss", "lr")


def write_trace(path, trace: list[TraceRow]) -> None:
    write_csv(
        path,
        TRACE_COLUMNS,
        [dict(epoch=t.epoch, stage=t.stage, loss=t.loss, lr=t.lr) for t in trace],
    )


# ------------------------------------------------------------- empirical loss


def _probit_score(y, q):
    """d/dq of the probit log likelihood: pdf/cdf ratios, stable in the tails."""
    log_pdf = -0.5 * q * q - np.log(_SQRT_2PI)
    pos = np.exp(log_pdf - log_ndtr(q))
    neg = np.exp(log_pdf - log_ndtr(-q))
    return y * pos - (1.0 - y) * neg


def empirical_loss(labels, means) -> tuple[float, np.ndarray]:
    """Sum of squared errors for the continuous outputs plus probit negative
    log likelihood for the binary outputs; returns (loss, d loss / d means).
    """
    y = np.asarray(labels, dtype=float)
    m = np.asarray(means, dtype=float)
    if y.size == 0:
        raise UsageError("empirical_loss requires a nonempty batch")
    if y.ndim != 2 or y.shape[1] != 4 or m.shape != y.shape:
        raise UsageError("labels and means must both have shape (n, 4)")
    r1 = y[:, 0] - m[:, 0]
    r2 = y[:, 2] - m[:, 1]
    q1 = m[:, 2]
    q2 = m[:, 3]
    nll1 = -(y[:, 1] * log_ndtr(q1) + (1.0 - y[:, 1]) * log_ndtr(-q1))
    nll2 = -(y[:, 3] * log_ndtr(q2) + (1.0 - y[:, 3]) * log_ndtr(-q2))
    loss = float(np.sum(r1 * r1) + np.sum(r2 * r2) + np.sum(nll1) + np.sum(nll2))
    grads = np.column_stack(
        [-2.0 * r1, -2.0 * r2, -_probit_score(y[:, 1], q1), -_probit_score(y[:, 3], q2)]
    )
    return loss, grads


# --------------------------------------------------------------------- Adam


class Adam:
    """Standard Adam with bias correction, one slot per named parameter."""

    def __init__(self, params: dict[str, np.ndarray], beta1: float, beta2: float, eps: float):
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}

    def step(self, params: dict[str, np.ndarray], grads: dict[str, np.ndarray], lr: float) -> None:
        self.t += 1
        correct1 = 1.0 - self.beta1**self.t
        correct2 = 1.0 - self.beta2**self.t
        for name, g in grads.items():
            m = self.m[name]
            v = self.v[name]
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            params[name] -= lr * (m / correct1) / (np.sqrt(v / correct2) + self.eps)


# ------------------------------------------------------------ staged training


@dataclass
class FeasibleResult:
    """Outcome of the staged training loop."""

    model: BiChannelModel
    params: cop.CopulaParams | None
    trace: list[TraceRow]
    diagnostics: estimator.EstimateDiagnostics | None
    stage1_model: BiChannelModel


def _clone_model(model: BiChannelModel) -> BiChannelModel:
    clone = init_model(model.encoder, model.head, model.seed)
    for name in model.params:
        clone.params[name] = model.params[name].copy()
    clone.freeze_encoder = model.freeze_encoder
    return clone


def _train_stage(model, labels, x_left, x_right, loss_fn, stage, epochs, lr0, decay,
                 decay_every, config, rng, trace, epoch_offset):
    n = labels.shape[0]
    adam = Adam(model.params, config.adam_beta1, config.adam_beta2, config.adam_eps)
    for epoch in range(epochs):
        lr = lr0 * decay ** (epoch // decay_every)
        perm = rng.permutation(n)
        total = 0.0
        for start in range(0, n, config.batch_size):
            idx = perm[start : start + config.batch_size]
            means = model.forward(x_left[idx], x_right[idx])
            loss, out_grads = loss_fn(labels[idx], means)
            if not np.isfinite(loss):
                raise TrainingError(
                    f"non-finite loss in stage {stage}, epoch {epoch}", trace=trace
                )
            grads = model.backward(out_grads)
            adam.step(model.params, grads, lr)
            total += loss
        trace.append(TraceRow(epoch=epoch_offset + epoch, stage=stage, loss=total / n, lr=lr))
    return epoch_offset + epochs


def run_feasible(
    labels: np.ndarray,
    x_left: np.ndarray,
    x_right: np.ndarray,
    encoder: EncoderSpec,
    head: HeadSpec,
    config: TrainConfig,
    copula_params: cop.CopulaParams | None = None,
    empirical_only: bool = False,
) -> FeasibleResult:
    """Three-stage training of the bi-channel model.

    Stage 2 estimates the copula parameters from stage-1 residuals unless
    ``copula_params`` overrides them (oracle / file source). With
    ``empirical_only`` the loop stops after stage 1.
    """
    labels = np.asarray(labels, dtype=float)
    if labels.size == 0:
        raise UsageError("training data must be nonempty")
    model = init_model(encoder, head, seed=config.seed)
    trace: list[TraceRow] = []
    rng1 = np.random.default_rng(np.random.SeedSequence((config.seed, 1)))
    next_epoch = _train_stage(
        model, labels, x_left, x_right, empirical_loss, 1,
        config.epochs_per_stage, config.lr_stage1, config.lr_decay,
        config.decay_every_stage1, config, rng1, trace, 0,
    )
    stage1_model = _clone_model(model)
    if empirical_only:
        return FeasibleResult(model, None, trace, None, stage1_model)

    diagnostics = None
    if copula_params is None:
        means = model.forward(x_left, x_right)
        warm = estimator.WarmupOutputs(
            e1=labels[:, 0] - means[:, 0],
            e2=labels[:, 2] - means[:, 1],
            qhat1=means[:, 2],
            qhat2=means[:, 3],
        )
        diagnostics = estimator.estimate_empirical_detailed(warm)
        copula_params = diagnostics.params

    if config.restart_stage3:
        model = init_model(encoder, head, seed=config.seed)
    model.freeze_encoder = config.freeze_encoder_stage3
    loss_fn = lambda y, m: cop.copula_loss(y, m, copula_params)
    rng3 = np.random.default_rng(np.random.SeedSequence((config.seed, 3)))
    _train_stage(
        model, labels, x_left, x_right, loss_fn, 3,
        config.epochs_per_stage, config.lr_stage3, config.lr_decay,
        config.decay_every_stage3, config, rng3, trace, next_epoch,
    )
    model.freeze_encoder = False
    return FeasibleResult(model, copula_params, trace, diagnostics, stage1_model)


# ------------------------------------------------------------- linear fitters

LOSS_KINDS = ("empirical", "copula-oracle", "copula-feasible", "copula-mle")


@dataclass
class LinearFit:
    """Coefficient estimates per margin (order m1, q1, m2, q2) with
    convergence bookkeeping."""

    coef: list[np.ndarray]
    loss_kind: str
    converged: bool
    iterations: int
    grad_norm: float
    params: cop.CopulaParams | None = None
    objective_path: list[float] = field(default_factory=list)

    def stacked(self) -> np.ndarray:
        return np.concatenate(self.coef)


def _lstsq_coef(features: np.ndarray, target: np.ndarray) -> np.ndarray:
    coef, _, rank, _ = np.linalg.lstsq(features, target, rcond=None)
    if rank < features.shape[1]:
        raise EstimationError("features are rank deficient")
    return coef


def probit_newton(features: np.ndarray, target: np.ndarray, tol: float = 1e-8,
                  max_iter: int = 500) -> tuple[np.ndarray, bool, int, float, list[float]]:
    """Probit maximum likelihood via damped Newton iterations.

    Returns (coef, converged, iterations, final gradient max-norm,
    objective path). Each iteration backtracks until the negative log
    likelihood decreases, so the objective path is nonincreasing.
    """
    f = np.asarray(features, dtype=float)
    y = np.asarray(target, dtype=float)
    beta = np.zeros(f.shape[1])

    def nll(b):
        q = f @ b
        return -float(np.sum(y * log_ndtr(q) + (1.0 - y) * log_ndtr(-q)))

    value = nll(beta)
    path = [value]
    converged = False
    it = 0
    grad_norm = np.inf
    for it in range(1, max_iter + 1):
        q = f @ beta
        score = _probit_score(y, q)
        grad = -(f.T @ score)
        grad_norm = float(np.max(np.abs(grad)))
        if grad_norm <= tol:
            converged = True
            break
        log_pdf = -0.5 * q * q - np.log(_SQRT_2PI)
        lam_pos = np.exp(log_pdf - log_ndtr(q))
        lam_neg = np.exp(log_pdf - log_ndtr(-q))
        w = y * lam_pos * (lam_pos + q) + (1.0 - y) * lam_neg * (lam_neg - q)
        w = np.maximum(w, 0.0)
        hess = (f * w[:, None]).T @ f + 1e-10 * np.eye(f.shape[1])
        step = np.linalg.solve(hess, grad)
        scale = 1.0
        for _ in range(60):
            candidate = beta - scale * step
            cand_value = nll(candidate)
            if cand_value <= value - 1e-4 * scale * float(grad @ step):
                break
            scale *= 0.5
        else:
            break  # no descent direction left; report non-convergence
        beta = candidate
        value = cand_value
        path.append(value)
    return beta, converged, it, grad_norm, path


def _empirical_linear(features_left, features_right, labels):
    beta_m1 = _lstsq_coef(features_left, labels[:, 0])
    beta_m2 = _lstsq_coef(features_right, labels[:, 2])
    beta_q1, conv1, it1, g1, path1 = probit_newton(features_left, labels[:, 1])
    beta_q2, conv2, it2, g2, path2 = probit_newton(features_right, labels[:, 3])
    fitresult = LinearFit(
        coef=[beta_m1, beta_q1, beta_m2, beta_q2],
        loss_kind="empirical",
        converged=conv1 and conv2,
        iterations=max(it1, it2),
        grad_norm=max(g1, g2),
        objective_path=path1 + path2,
    )
    return fitresult


def fit_linear(
    features_left: np.ndarray,
    features_right: np.ndarray,
    labels: np.ndarray,
    loss_kind: str = "empirical",
    copula_params: cop.CopulaParams | None = None,
    tol: float = 1e-8,
    max_iter: int = 500,
) -> LinearFit:
    """Full-batch coefficient estimation with a fixed (identity) encoder.

    ``empirical`` solves least squares for the continuous margins and probit
    maximum likelihood for the binary ones. The ``copula-*`` kinds minimize
    the joint copula loss over all four coefficient vectors by BFGS (warm
    started from the empirical solution): ``copula-feasible`` estimates the
    copula parameters from the empirical fit first, while ``copula-oracle``
    and ``copula-mle`` use the caller-supplied (typically true) parameters.
    """
    if loss_kind not in LOSS_KINDS:
        raise ConfigError(f"loss_kind must be one of {LOSS_KINDS}")
    f1 = np.asarray(features_left, dtype=float)
    f2 = np.asarray(features_right, dtype=float)
    y = np.asarray(labels, dtype=float)
    if y.ndim != 2 or y.shape[1] != 4 or f1.shape[0] != y.shape[0] or f2.shape[0] != y.shape[0]:
        raise UsageError("labels must be (n, 4) with matching feature rows")

    base = _empirical_linear(f1, f2, y)
    if loss_kind == "empirical":
        return base

    if loss_kind == "copula-feasible":
        means = _linear_means(f1, f2, base.coef)
        warm = estimator.WarmupOutputs(
            e1=y[:, 0] - means[:, 0],
            e2=y[:, 2] - means[:, 1],
            qhat1=means[:, 2],
            qhat2=means[:, 3],
        )
        copula_params = estimator.estimate_empirical(warm)
    elif copula_params is None:
        raise ConfigError(f"{loss_kind} requires explicit copula parameters")

    d1 = f1.shape[1]
    d2 = f2.shape[1]
    splits = np.cumsum([d1, d1, d2])

    def unpack(theta):
        b1, bq1, b2, bq2 = np.split(theta, splits)
        return [b1, bq1, b2, bq2]

    def objective(theta):
        coef = unpack(theta)
        means = _linear_means(f1, f2, coef)
        loss, out_grads = cop.copula_loss(y, means, copula_params)
        grad = np.concatenate(
            [
                f1.T @ out_grads[:, 0],
                f1.T @ out_grads[:, 2],
                f2.T @ out_grads[:, 1],
                f2.T @ out_grads[:, 3],
            ]
        )
        return loss, grad

    path: list[float] = []
    theta0 = base.stacked()
    result = minimize(
        objective,
        theta0,
        jac=True,
        method="BFGS",
        callback=lambda xk: path.append(objective(xk)[0]),
        options={"gtol": tol, "maxiter": max_iter},
    )
    # BFGS line searches stall on precision loss well above tight gradient
    # tolerances for large batches; a few damped Newton steps on the same
    # objective finish the job.
    theta, value, grad_norm, extra_iter, extra_path = _newton_polish(
        objective, result.x, tol, max_iter
    )
    return LinearFit(
        coef=unpack(theta),
        loss_kind=loss_kind,
        converged=bool(grad_norm <= tol),
        iterations=int(result.nit) + extra_iter,
        grad_norm=grad_norm,
        params=copula_params,
        objective_path=[objective(theta0)[0]] + path + extra_path,
    )


def _newton_polish(objective, theta, tol, max_iter):
    """Damped Newton refinement with a finite-difference Hessian of the
    analytic gradient; never accepts an increasing step."""
    theta = np.array(theta, dtype=float)
    value, grad = objective(theta)
    path: list[float] = []
    steps = 0
    for steps in range(1, min(max_iter, 50) + 1):
        grad_norm = float(np.max(np.abs(grad)))
        if grad_norm <= tol:
            return theta, value, grad_norm, steps - 1, path
        dim = theta.size
        hess = np.empty((dim, dim))
        h = 1e-6 * np.maximum(1.0, np.abs(theta))
        for j in range(dim):
            up = theta.copy()
            up[j] += h[j]
            down = theta.copy()
            down[j] -= h[j]
            hess[:, j] = (objective(up)[1] - objective(down)[1]) / (2.0 * h[j])
        hess = 0.5 * (hess + hess.T) + 1e-12 * np.eye(dim)
        try:
            step = np.linalg.solve(hess, grad)
        except np.linalg.LinAlgError:
            break
        # accept float-noise-level ties so the iteration can walk the flat
        # bottom near the optimum down to the gradient tolerance
        slack = 1e-12 * max(1.0, abs(value))
        scale = 1.0
        improved = False
        for _ in range(40):
            cand = theta - scale * step
            cand_value, cand_grad = objective(cand)
            if cand_value <= value + slack:
                accept_norm = float(np.max(np.abs(cand_grad)))
                if cand_value <= value or accept_norm < float(np.max(np.abs(grad))):
                    theta, value, grad = cand, cand_value, cand_grad
                    path.append(value)
                    improved = True
                    break
            scale *= 0.5
        if not improved:
            break
    return theta, value, float(np.max(np.abs(grad))), steps, path


def _linear_means(f1: np.ndarray, f2: np.ndarray, coef: list[np.ndarray]) -> np.ndarray:
    """Means (m1, m2, q1, q2) from margin-ordered coefficients."""
    return np.column_stack([f1 @ coef[0], f2 @ coef[2], f1 @ coef[1], f2 @ coef[3]])
