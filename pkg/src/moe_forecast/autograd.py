"""Hand-written reverse-mode gradients of the composite loss, plus a central
finite-difference oracle working on the flat parameter vector.

Kink convention: the derivative of |.|, ReLU and LeakyReLU at exactly 0 is
taken to be 0.
"""

from __future__ import annotations

import numpy as np

from .model import Activation, ModelConfig, MoeParameters, forward_cached
from .objective import (
    LossBreakdown,
    LossWeights,
    MaskSchedule,
    combine,
    l1_mask,
    loss_breakdown,
    mask_start,
    reg_loss,
)


def _leaky_grad(z: np.ndarray, slope: float) -> np.ndarray:
    return np.where(z > 0, 1.0, np.where(z < 0, slope, 0.0))


def _hidden_grad(a: np.ndarray, z: np.ndarray, config: ModelConfig) -> np.ndarray:
    act = config.hidden_activation
    if act is Activation.RELU:
        return (a > 0).astype(float)
    if act is Activation.TANH:
        return 1.0 - z * z
    return _leaky_grad(a, config.hidden_leaky_slope)


def backward(params: MoeParameters, config: ModelConfig, X, y, weights: LossWeights,
             schedule: MaskSchedule | None = None) -> tuple[LossBreakdown, MoeParameters]:
    """Loss breakdown and gradient of the total loss for one batch.

    Rows of ``X``/``y`` must be in chronological order when the model has
    more than one MLP expert, since the masks cut the batch by position.
    """
    schedule = schedule or MaskSchedule(config.num_mlp_experts)
    if schedule.num_mlp_experts != config.num_mlp_experts:
        raise ValueError("mask schedule and model disagree on the number of MLP experts")
    y = np.asarray(y, dtype=float)
    cache = forward_cached(params, config, X)
    X = cache.X
    n = X.shape[0]
    if y.shape != (n,):
        raise ValueError(f"targets have shape {y.shape}, expected ({n},)")
    if n == 0:
        raise ValueError("empty batch")
    K = config.num_mlp_experts
    E = cache.expert_outputs
    w = cache.gate_weights
    gamma = weights.gamma

    resid = y - cache.y_hat
    base = float(np.mean(np.abs(resid)))
    expert_resid = y[:, None] - E
    aux_parts = [float(np.mean(np.abs(expert_resid[:, 0])))]
    # dL/dE from the aux term, scaled per expert by its own normaliser
    aux_scale = (1.0 - gamma) / (K + 1)
    dE = np.zeros_like(E)
    dE[:, 0] = -aux_scale * np.sign(expert_resid[:, 0]) / n
    for k in range(1, K + 1):
        s = mask_start(k, n, schedule)
        r = expert_resid[s:, k]
        aux_parts.append(float(np.mean(np.abs(r))))
        dE[s:, k] = -aux_scale * np.sign(r) / (n - s)

    l2, l1 = reg_loss(params, weights)
    breakdown = combine(base, aux_parts, l2, l1, gamma)

    d_yhat = -gamma * np.sign(resid) / n
    dE += d_yhat[:, None] * w
    dw = d_yhat[:, None] * E
    dlogit = w * (dw - np.sum(w * dw, axis=1, keepdims=True))
    dgate = dlogit * _leaky_grad(cache.gate_pre, config.gate_leaky_slope)

    grad = params.zeros_like()
    grad.beta[...] = X.T @ dE[:, 0]
    for k in range(1, K + 1):
        a = cache.pre_hidden[k - 1]
        z = cache.hidden[k - 1]
        dout = dE[:, k]
        grad.W2(k)[...] = z.T @ dout
        grad.b2(k)[...] = dout.sum()
        da = np.outer(dout, params.W2(k)) * _hidden_grad(a, z, config)
        grad.W1(k)[...] = da.T @ X
        grad.b1(k)[...] = da.sum(axis=0)
    grad.gate_W[...] = dgate.T @ X
    if config.gate_bias:
        grad.gate_b[...] = dgate.sum(axis=0)

    theta = params.data
    if weights.lambda1:
        grad.data += 2.0 * weights.lambda1 * theta
    if weights.lambda2:
        sel = l1_mask(params, weights.l1_target)
        grad.data[sel] += weights.lambda2 * np.sign(theta[sel])
    if not config.gate_bias:
        # gate_b is inert when the bias is disabled; keep it pinned
        grad.gate_b[...] = 0.0

    if not np.all(np.isfinite(grad.data)):
        bad = [name for name in grad.names() if not np.all(np.isfinite(grad[name]))]
        raise FloatingPointError(f"non-finite gradient in {', '.join(bad)}")
    return breakdown, grad


def loss_value(params: MoeParameters, config: ModelConfig, X, y, weights: LossWeights,
               schedule: MaskSchedule | None = None) -> float:
    schedule = schedule or MaskSchedule(config.num_mlp_experts)
    cache = forward_cached(params, config, X)
    return loss_breakdown(y, cache.y_hat, cache.expert_outputs.T, params, weights, schedule).total


def fd_gradient(params: MoeParameters, config: ModelConfig, X, y, weights: LossWeights,
                schedule: MaskSchedule | None = None, step: float = 1e-6) -> MoeParameters:
    """Central differences (L(theta + h e_i) - L(theta - h e_i)) / 2h, one
    coordinate at a time."""
    if step <= 0:
        raise ValueError("finite-difference step must be positive")
    theta = params.flatten()
    grad = np.empty_like(theta)
    for i in range(theta.size):
        orig = theta[i]
        theta[i] = orig + step
        up = loss_value(MoeParameters(config, theta), config, X, y, weights, schedule)
        theta[i] = orig - step
        down = loss_value(MoeParameters(config, theta), config, X, y, weights, schedule)
        theta[i] = orig
        grad[i] = (up - down) / (2.0 * step)
    return MoeParameters(config, grad)


def relative_error(analytic: np.ndarray, numeric: np.ndarray) -> np.ndarray:
    return np.abs(analytic - numeric) / (1.0 + np.abs(analytic))
