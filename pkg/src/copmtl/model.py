"""Toy bi-channel predictor: one shared encoder applied to both covariate
groups, one shared linear head, and one low-rank residual adapter per
channel so the two channels can deviate from the shared mapping.

The model is deliberately small and written directly in numpy with explicit
reverse-mode gradients. Forward produces the four conditional outputs
(m1, m2, q1, q2) = (continuous mean left, continuous mean right, probit
latent left, probit latent right); consumers apply the probit link.
"""

from __future__ import annotations

import io
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DataFormatError, UsageError
from .normals import std_cdf
from .textio import loads_kv

CHECKPOINT_MAGIC = "copmtl-checkpoint v1"

_SQRT_2PI = 2.5066282746310002


def gelu(x):
    """x * std_cdf(x), the exact (non-tanh) form."""
    return x * std_cdf(x)


def gelu_grad(x):
    """Derivative std_cdf(x) + x * std_pdf(x)."""
    return std_cdf(x) + x * np.exp(-0.5 * x * x) / _SQRT_2PI


@dataclass(frozen=True)
class EncoderSpec:
    """Shared encoder configuration.

    kind "identity" passes inputs through (input_dim == output_dim);
    "linear" is a single weight matrix followed by GELU; "mlp" stacks
    affine+GELU layers through hidden_dims before the output layer.
    """

    kind: str
    input_dim: int
    output_dim: int
    hidden_dims: tuple[int, ...] = ()

    def __post_init__(self):
        if self.kind not in ("identity", "linear", "mlp"):
            raise ConfigError(f"unknown encoder kind {self.kind!r}")
        dims = (self.input_dim, self.output_dim, *self.hidden_dims)
        if any(int(d) <= 0 for d in dims):
            raise ConfigError("encoder dimensions must be positive")
        if self.kind == "identity" and self.input_dim != self.output_dim:
            raise ConfigError("identity encoder requires input_dim == output_dim")
        if self.kind == "mlp" and not self.hidden_dims:
            raise ConfigError("mlp encoder requires at least one hidden dim")
        if self.kind != "mlp" and self.hidden_dims:
            raise ConfigError("hidden_dims only apply to the mlp encoder")

    def layer_dims(self) -> list[tuple[int, int]]:
        """(fan_in, fan_out) per affine layer, in forward order."""
        if self.kind == "identity":
            return []
        widths = [self.input_dim, *self.hidden_dims, self.output_dim]
        return [(widths[i], widths[i + 1]) for i in range(len(widths) - 1)]


@dataclass(frozen=True)
class HeadSpec:
    """Bottleneck residual adapter configuration for the output heads."""

    adapter_rank: int = 1
    adapter_scale: float = 0.1

    def __post_init__(self):
        if self.adapter_rank < 1:
            raise ConfigError("adapter_rank must be >= 1")
        if not self.adapter_scale > 0:
            raise ConfigError("adapter_scale must be positive")


class BiChannelModel:
    """Shared encoder + shared base head + per-channel residual adapters.

    Parameters live in ``self.params`` (ordered dict of float64 arrays);
    both channels reference the same encoder and base-head entries.
    ``forward`` caches activations; ``backward`` consumes the cache.
    """

    def __init__(self, encoder: EncoderSpec, head: HeadSpec, seed: int):
        self.encoder = encoder
        self.head = head
        self.seed = int(seed)
        self.freeze_encoder = False
        rng = np.random.default_rng(self.seed)
        params: dict[str, np.ndarray] = {}
        for i, (fan_in, fan_out) in enumerate(encoder.layer_dims()):
            params[f"enc.w{i}"] = rng.standard_normal((fan_out, fan_in)) / np.sqrt(fan_in)
            if encoder.kind == "mlp":
                params[f"enc.b{i}"] = np.zeros(fan_out)
        d0 = encoder.output_dim
        params["head.w"] = rng.standard_normal((2, d0)) / np.sqrt(d0)
        params["head.b"] = np.zeros(2)
        for side in ("left", "right"):
            params[f"{side}.down"] = rng.standard_normal((head.adapter_rank, d0)) / np.sqrt(d0)
            params[f"{side}.up"] = np.zeros((2, head.adapter_rank))
        self.params = params
        self._cache = None

    # ----------------------------------------------------------- forward

    def _encode(self, x: np.ndarray) -> tuple[np.ndarray, list[tuple[np.ndarray, np.ndarray]]]:
        if x.ndim != 2 or x.shape[1] != self.encoder.input_dim:
            raise UsageError(
                f"input must have shape (n, {self.encoder.input_dim}), got {x.shape}"
            )
        if self.encoder.kind == "identity":
            return x, []
        z = x
        trail = []
        for i in range(len(self.encoder.layer_dims())):
            pre = z @ self.params[f"enc.w{i}"].T
            if self.encoder.kind == "mlp":
                pre = pre + self.params[f"enc.b{i}"]
            trail.append((z, pre))
            z = gelu(pre)
        return z, trail

    def _head(self, z: np.ndarray, side: str) -> np.ndarray:
        base = z @ self.params["head.w"].T + self.params["head.b"]
        bottleneck = z @ self.params[f"{side}.down"].T
        return base + self.head.adapter_scale * (bottleneck @ self.params[f"{side}.up"].T)

    def forward(self, x_left: np.ndarray, x_right: np.ndarray) -> np.ndarray:
        """Outputs (n, 4) with columns (m1, m2, q1, q2); caches activations."""
        x_left = np.asarray(x_left, dtype=float)
        x_right = np.asarray(x_right, dtype=float)
        z_left, trail_left = self._encode(x_left)
        z_right, trail_right = self._encode(x_right)
        out_left = self._head(z_left, "left")
        out_right = self._head(z_right, "right")
        self._cache = {
            "z": {"left": z_left, "right": z_right},
            "trail": {"left": trail_left, "right": trail_right},
        }
        return np.column_stack(
            [out_left[:, 0], out_right[:, 0], out_left[:, 1], out_right[:, 1]]
        )

    # ---------------------------------------------------------- backward

    def backward(self, upstream: np.ndarray) -> dict[str, np.ndarray]:
        """Parameter gradients of sum(upstream * outputs).

        ``upstream`` is (n, 4) over (m1, m2, q1, q2). Encoder and base-head
        gradients accumulate contributions from both channels; with
        freeze_encoder set, encoder gradients are identically zero.
        """
        if self._cache is None:
            raise UsageError("backward requires a recorded forward pass")
        upstream = np.asarray(upstream, dtype=float)
        n = self._cache["z"]["left"].shape[0]
        if upstream.shape != (n, 4):
            raise UsageError(f"upstream must have shape ({n}, 4)")
        grads = {name: np.zeros_like(value) for name, value in self.params.items()}
        chan_upstream = {
            "left": upstream[:, (0, 2)],
            "right": upstream[:, (1, 3)],
        }
        scale = self.head.adapter_scale
        for side in ("left", "right"):
            u = chan_upstream[side]
            z = self._cache["z"][side]
            grads["head.w"] += u.T @ z
            grads["head.b"] += u.sum(axis=0)
            down = self.params[f"{side}.down"]
            up = self.params[f"{side}.up"]
            grads[f"{side}.up"] += scale * (u.T @ (z @ down.T))
            grads[f"{side}.down"] += scale * ((u @ up).T @ z)
            if self.encoder.kind == "identity":
                continue
            dz = u @ self.params["head.w"] + scale * ((u @ up) @ down)
            for i in reversed(range(len(self._cache["trail"][side]))):
                layer_in, pre = self._cache["trail"][side][i]
                da = dz * gelu_grad(pre)
                grads[f"enc.w{i}"] += da.T @ layer_in
                if self.encoder.kind == "mlp":
                    grads[f"enc.b{i}"] += da.sum(axis=0)
                if i > 0:
                    dz = da @ self.params[f"enc.w{i}"]
        if self.freeze_encoder:
            for name in grads:
                if name.startswith("enc."):
                    grads[name][...] = 0.0
        return grads

    # ------------------------------------------------------------ views

    @property
    def beta_view(self) -> np.ndarray:
        """Effective per-output coefficient vectors over representations.

        Rows: coefficients producing (m1, q1, m2, q2) from the encoder
        output, i.e. base head plus the scaled adapter of each channel.
        Meaningful for identity/linear encoders where the representation is
        an explicit feature vector.
        """
        w_left = self.params["head.w"] + self.head.adapter_scale * (
            self.params["left.up"] @ self.params["left.down"]
        )
        w_right = self.params["head.w"] + self.head.adapter_scale * (
            self.params["right.up"] @ self.params["right.down"]
        )
        return np.vstack([w_left[0], w_left[1], w_right[0], w_right[1]])

    def param_names(self) -> list[str]:
        return list(self.params.keys())


def init_model(encoder: EncoderSpec, head: HeadSpec, seed: int) -> BiChannelModel:
    """Deterministic model construction; adapters start at zero so the two
    channels coincide until trained."""
    return BiChannelModel(encoder, head, seed)


# ------------------------------------------------------------- checkpoints


def save_checkpoint(path, model: BiChannelModel) -> None:
    """Text header (spec echo, seed, layout) + raw little-endian float64."""
    payload = b"".join(
        np.ascontiguousarray(model.params[name], dtype="<f8").tobytes()
        for name in model.param_names()
    )
    layout = ", ".join(
        f"{name} {'x'.join(str(d) for d in model.params[name].shape)}"
        for name in model.param_names()
    )
    header_lines = [
        CHECKPOINT_MAGIC,
        f"seed: {model.seed}",
        f"encoder.kind: {model.encoder.kind}",
        f"encoder.input_dim: {model.encoder.input_dim}",
        f"encoder.output_dim: {model.encoder.output_dim}",
        f"encoder.hidden_dims: {','.join(str(d) for d in model.encoder.hidden_dims)}",
        f"head.adapter_rank: {model.head.adapter_rank}",
        f"head.adapter_scale: {model.head.adapter_scale!r}",
        f"params: {layout}",
        f"payload_bytes: {len(payload)}",
        "",
        "",
    ]
    with open(path, "wb") as fh:
        fh.write("\n".join(header_lines).encode("utf-8"))
        fh.write(payload)


def load_checkpoint(path) -> BiChannelModel:
    with open(path, "rb") as fh:
        blob = fh.read()
    sep = blob.find(b"\n\n")
    if sep < 0 or not blob.startswith(CHECKPOINT_MAGIC.encode("utf-8")):
        raise DataFormatError(f"{path}: not a copmtl checkpoint")
    header = blob[: sep + 1].decode("utf-8")
    payload = blob[sep + 2 :]
    doc = loads_kv(header.split("\n", 1)[1], source=str(path))
    hidden = tuple(int(t) for t in doc["encoder.hidden_dims"].split(",") if t.strip())
    encoder = EncoderSpec(
        kind=doc["encoder.kind"],
        input_dim=int(doc["encoder.input_dim"]),
        output_dim=int(doc["encoder.output_dim"]),
        hidden_dims=hidden,
    )
    head = HeadSpec(
        adapter_rank=int(doc["head.adapter_rank"]),
        adapter_scale=float(doc["head.adapter_scale"]),
    )
    model = BiChannelModel(encoder, head, seed=int(doc["seed"]))
    expected = int(doc["payload_bytes"])
    if len(payload) != expected:
        raise DataFormatError(
            f"{path}: payload holds {len(payload)} bytes, header declares {expected}"
        )
    reader = io.BytesIO(payload)
    for entry in doc["params"].split(","):
        name, _, shape_txt = entry.strip().rpartition(" ")
        shape = tuple(int(d) for d in shape_txt.split("x"))
        if name not in model.params or model.params[name].shape != shape:
            raise DataFormatError(f"{path}: unexpected parameter entry {entry.strip()!r}")
        count = int(np.prod(shape))
        raw = reader.read(count * 8)
        if len(raw) != count * 8:
            raise DataFormatError(
                f"{path}: truncated payload for {name}: expected {count * 8} bytes, got {len(raw)}"
            )
        model.params[name] = np.frombuffer(raw, dtype="<f8").reshape(shape).copy()
    if reader.read(1):
        raise DataFormatError(f"{path}: payload longer than declared layout")
    return model
