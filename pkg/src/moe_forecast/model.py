"""Mixture-of-experts forward pass: one linear expert, K one-hidden-layer MLP
experts and a softmax gate fed by the same lag vector.

All trainable tensors live in one flat float64 buffer; the named tensors on
:class:`MoeParameters` are views into it. Gradients and optimizer state reuse
the same layout, which keeps flattening for finite differences and Adam free.
"""

from __future__ import annotations

import enum
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .numerics import DTYPE, InitScheme, ShapeError, init_params, make_rng

CHECKPOINT_FORMAT = "moe-forecast-checkpoint"
CHECKPOINT_VERSION = 1


class Activation(str, enum.Enum):
    RELU = "relu"
    TANH = "tanh"
    LEAKY_RELU = "leaky_relu"


@dataclass(frozen=True)
class ModelConfig:
    input_dim: int
    hidden_sizes: tuple[int, ...] = (20, 20, 20)
    hidden_activation: Activation = Activation.RELU
    gate_leaky_slope: float = 0.01
    hidden_leaky_slope: float = 0.01
    gate_bias: bool = True

    def __post_init__(self):
        object.__setattr__(self, "hidden_sizes", tuple(int(h) for h in self.hidden_sizes))
        object.__setattr__(self, "hidden_activation", Activation(self.hidden_activation))
        if self.input_dim < 1:
            raise ValueError(f"input_dim must be >= 1, got {self.input_dim}")
        if any(h < 1 for h in self.hidden_sizes):
            raise ValueError(f"hidden sizes must be >= 1, got {self.hidden_sizes}")

    @property
    def num_mlp_experts(self) -> int:
        return len(self.hidden_sizes)

    @property
    def num_experts(self) -> int:
        return len(self.hidden_sizes) + 1

    def to_dict(self) -> dict:
        return {
            "input_dim": self.input_dim,
            "hidden_sizes": list(self.hidden_sizes),
            "hidden_activation": self.hidden_activation.value,
            "gate_leaky_slope": self.gate_leaky_slope,
            "hidden_leaky_slope": self.hidden_leaky_slope,
            "gate_bias": self.gate_bias,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        return cls(
            input_dim=int(d["input_dim"]),
            hidden_sizes=tuple(d.get("hidden_sizes", ())),
            hidden_activation=Activation(d.get("hidden_activation", "relu")),
            gate_leaky_slope=float(d.get("gate_leaky_slope", 0.01)),
            hidden_leaky_slope=float(d.get("hidden_leaky_slope", 0.01)),
            gate_bias=bool(d.get("gate_bias", True)),
        )


def parameter_layout(config: ModelConfig) -> dict[str, tuple[slice, tuple[int, ...]]]:
    """Name -> (slice into the flat buffer, shape), in a fixed order."""
    m = config.input_dim
    layout: dict[str, tuple[slice, tuple[int, ...]]] = {}
    offset = 0

    def add(name: str, shape: tuple[int, ...]):
        nonlocal offset
        size = int(np.prod(shape))
        layout[name] = (slice(offset, offset + size), shape)
        offset += size

    add("beta", (m,))
    for k, h in enumerate(config.hidden_sizes, start=1):
        add(f"W1_{k}", (h, m))
        add(f"b1_{k}", (h,))
        add(f"W2_{k}", (h,))
        add(f"b2_{k}", ())
    add("gate_W", (config.num_experts, m))
    add("gate_b", (config.num_experts,))
    return layout


class MoeParameters:
    """Every trainable tensor of the model, backed by one flat vector.

    ``W2_k`` is stored as a length-``h_k`` vector (the single row of the
    ``1 x h_k`` output matrix) and ``b2_k`` as a 0-d view.
    """

    def __init__(self, config: ModelConfig, data: np.ndarray | None = None):
        self.config = config
        self.layout = parameter_layout(config)
        size = sum(s.stop - s.start for s, _ in self.layout.values())
        if data is None:
            data = np.zeros(size, dtype=DTYPE)
        else:
            data = np.asarray(data, dtype=DTYPE)
            if data.shape != (size,):
                raise ShapeError(f"flat parameter vector has shape {data.shape}, expected ({size},)")
        self.data = data

    def __getitem__(self, name: str) -> np.ndarray:
        sl, shape = self.layout[name]
        return self.data[sl].reshape(shape)

    def names(self) -> list[str]:
        return list(self.layout)

    @property
    def size(self) -> int:
        return self.data.size

    @property
    def beta(self) -> np.ndarray:
        return self["beta"]

    @property
    def gate_W(self) -> np.ndarray:
        return self["gate_W"]

    @property
    def gate_b(self) -> np.ndarray:
        return self["gate_b"]

    def W1(self, k: int) -> np.ndarray:
        return self[f"W1_{k}"]

    def b1(self, k: int) -> np.ndarray:
        return self[f"b1_{k}"]

    def W2(self, k: int) -> np.ndarray:
        return self[f"W2_{k}"]

    def b2(self, k: int) -> np.ndarray:
        return self[f"b2_{k}"]

    def flatten(self) -> np.ndarray:
        return self.data.copy()

    @classmethod
    def unflatten(cls, config: ModelConfig, flat: np.ndarray) -> "MoeParameters":
        return cls(config, np.array(flat, dtype=DTYPE, copy=True))

    def copy(self) -> "MoeParameters":
        return MoeParameters(self.config, self.data.copy())

    def zeros_like(self) -> "MoeParameters":
        return MoeParameters(self.config)

    def mask(self, names) -> np.ndarray:
        """Boolean mask over the flat buffer selecting the named tensors."""
        out = np.zeros(self.size, dtype=bool)
        for name in names:
            out[self.layout[name][0]] = True
        return out

    def __eq__(self, other):
        if not isinstance(other, MoeParameters):
            return NotImplemented
        return self.config == other.config and np.array_equal(self.data, other.data)

    def __repr__(self):
        return f"MoeParameters(m={self.config.input_dim}, hidden={self.config.hidden_sizes}, size={self.size})"


def init_moe_parameters(config: ModelConfig, rng: np.random.Generator) -> MoeParameters:
    """Kaiming-uniform MLP weights, zero biases and beta, small-uniform gate."""
    params = MoeParameters(config)
    m = config.input_dim
    for k, h in enumerate(config.hidden_sizes, start=1):
        params.W1(k)[...] = init_params((h, m), InitScheme.UNIFORM_KAIMING, rng)
        params.W2(k)[...] = init_params((1, h), InitScheme.UNIFORM_KAIMING, rng)[0]
    params.gate_W[...] = init_params((config.num_experts, m), InitScheme.SMALL_UNIFORM, rng)
    return params


def leaky_relu(z: np.ndarray, slope: float) -> np.ndarray:
    return np.where(z > 0, z, slope * z)


def hidden_activation(a: np.ndarray, config: ModelConfig) -> np.ndarray:
    act = config.hidden_activation
    if act is Activation.RELU:
        return np.maximum(a, 0.0)
    if act is Activation.TANH:
        return np.tanh(a)
    return leaky_relu(a, config.hidden_leaky_slope)


def softmax_rows(z: np.ndarray) -> np.ndarray:
    shifted = z - z.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


@dataclass
class Prediction:
    y_hat: float
    expert_outputs: np.ndarray
    gate_weights: np.ndarray


@dataclass
class ForwardCache:
    """Batch intermediates kept for the backward pass."""

    X: np.ndarray
    pre_hidden: list[np.ndarray] = field(default_factory=list)
    hidden: list[np.ndarray] = field(default_factory=list)
    expert_outputs: np.ndarray | None = None
    gate_pre: np.ndarray | None = None
    gate_weights: np.ndarray | None = None
    y_hat: np.ndarray | None = None


def _as_batch(X, config: ModelConfig) -> np.ndarray:
    X = np.asarray(X, dtype=DTYPE)
    if X.ndim != 2 or X.shape[1] != config.input_dim:
        raise ShapeError(f"expected input of shape (N, {config.input_dim}), got {X.shape}")
    if not np.all(np.isfinite(X)):
        raise ValueError("model input contains non-finite values")
    return X


def _check_params(params: MoeParameters, config: ModelConfig):
    if params.config != config:
        raise ShapeError(f"parameters built for {params.config}, model config is {config}")


def forward_cached(params: MoeParameters, config: ModelConfig, X) -> ForwardCache:
    _check_params(params, config)
    X = _as_batch(X, config)
    cache = ForwardCache(X=X)
    outputs = np.empty((X.shape[0], config.num_experts), dtype=DTYPE)
    outputs[:, 0] = X @ params.beta
    for k in range(1, config.num_mlp_experts + 1):
        a = X @ params.W1(k).T + params.b1(k)
        z = hidden_activation(a, config)
        cache.pre_hidden.append(a)
        cache.hidden.append(z)
        outputs[:, k] = z @ params.W2(k) + params.b2(k)
    cache.expert_outputs = outputs
    g = X @ params.gate_W.T
    if config.gate_bias:
        g = g + params.gate_b
    cache.gate_pre = g
    cache.gate_weights = softmax_rows(leaky_relu(g, config.gate_leaky_slope))
    cache.y_hat = np.einsum("nj,nj->n", cache.gate_weights, outputs)
    return cache


def gate_forward(params: MoeParameters, x, config: ModelConfig | None = None) -> np.ndarray:
    """Expert weights softmax(LeakyReLU(gate_W x + gate_b)) for one input vector."""
    config = config or params.config
    X = _as_batch(np.atleast_2d(x), config)
    g = X @ params.gate_W.T
    if config.gate_bias:
        g = g + params.gate_b
    return softmax_rows(leaky_relu(g, config.gate_leaky_slope))[0]


def forward(params: MoeParameters, config: ModelConfig, x) -> Prediction:
    x = np.asarray(x, dtype=DTYPE)
    if x.ndim != 1:
        raise ShapeError(f"forward expects a single input vector, got shape {x.shape}")
    return forward_batch(params, config, x[None, :])[0]


def forward_batch(params: MoeParameters, config: ModelConfig, X) -> list[Prediction]:
    cache = forward_cached(params, config, X)
    return [
        Prediction(float(cache.y_hat[n]), cache.expert_outputs[n].copy(), cache.gate_weights[n].copy())
        for n in range(cache.X.shape[0])
    ]


def predict(params: MoeParameters, config: ModelConfig, X) -> np.ndarray:
    """Mixture output for every row of ``X`` as a plain vector."""
    return forward_cached(params, config, X).y_hat


def save_checkpoint(params: MoeParameters, path, extra: dict | None = None) -> None:
    """Write config and tensors as JSON. Floats use repr, so reloading is exact."""
    payload = {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "config": params.config.to_dict(),
        "tensors": {name: params[name].tolist() for name in params.names()},
    }
    if extra:
        payload["extra"] = extra
    Path(path).write_text(json.dumps(payload, indent=1))


def load_checkpoint(path) -> MoeParameters:
    payload = json.loads(Path(path).read_text())
    if payload.get("format") != CHECKPOINT_FORMAT:
        raise ValueError(f"{path} is not a {CHECKPOINT_FORMAT} file")
    if payload.get("version") != CHECKPOINT_VERSION:
        raise ValueError(f"unsupported checkpoint version {payload.get('version')}")
    config = ModelConfig.from_dict(payload["config"])
    params = MoeParameters(config)
    for name in params.names():
        values = np.asarray(payload["tensors"][name], dtype=DTYPE)
        target = params[name]
        if values.shape != target.shape:
            raise ShapeError(f"checkpoint tensor {name} has shape {values.shape}, expected {target.shape}")
        target[...] = values
    return params


def fresh_parameters(config: ModelConfig, seed: int) -> MoeParameters:
    return init_moe_parameters(config, make_rng(seed))
