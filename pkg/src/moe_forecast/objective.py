"""Composite training loss.

    total = gamma * base + (1 - gamma) * aux + l2 + l1

``base`` is the MAE of the mixture output. ``aux`` averages the per-expert
MAEs: the linear expert over the whole batch, MLP expert k only over batch
rows n > floor(pi_k * N) (1-based), with pi_k = (k - 1) / K. Rows are assumed
to be in chronological order, so later experts see shorter, more recent
windows.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .model import MoeParameters


class L1Target(str, enum.Enum):
    """Which tensors count as "output weights" for the l1 penalty."""

    OUTPUT_LAYERS = "output_layers"  # beta, every W2_k/b2_k and the gate
    GATE = "gate"  # gate layer only


@dataclass(frozen=True)
class LossWeights:
    gamma: float = 0.25
    lambda1: float = 1e-8
    lambda2: float = 1e-8
    l1_target: L1Target = L1Target.OUTPUT_LAYERS

    def __post_init__(self):
        object.__setattr__(self, "l1_target", L1Target(self.l1_target))
        if not 0.0 <= self.gamma <= 1.0:
            raise ValueError(f"gamma must lie in [0, 1], got {self.gamma}")
        if self.lambda1 < 0 or self.lambda2 < 0:
            raise ValueError("regularisation coefficients must be nonnegative")


@dataclass(frozen=True)
class MaskSchedule:
    num_mlp_experts: int

    def __post_init__(self):
        if self.num_mlp_experts < 0:
            raise ValueError("number of MLP experts must be >= 0")

    @property
    def offsets(self) -> list[float]:
        K = self.num_mlp_experts
        return [(k - 1) / K for k in range(1, K + 1)]

    def start(self, k: int, n: int) -> int:
        return mask_start(k, n, self)

    def counts(self, n: int) -> list[int]:
        return [n - mask_start(k, n, self) for k in range(1, self.num_mlp_experts + 1)]


@dataclass
class LossBreakdown:
    base: float
    aux_linear: float
    aux_mlp: list[float]
    aux: float
    reg_l2: float
    reg_l1: float
    total: float
    gamma: float

    def to_dict(self) -> dict:
        return {
            "base": self.base,
            "aux_linear": self.aux_linear,
            "aux_mlp": list(self.aux_mlp),
            "aux": self.aux,
            "reg_l2": self.reg_l2,
            "reg_l1": self.reg_l1,
            "total": self.total,
        }


def mask_start(k: int, n: int, schedule: MaskSchedule) -> int:
    """floor(pi_k * n) for 1-based expert index k; integer arithmetic avoids
    rounding surprises in the float product."""
    K = schedule.num_mlp_experts
    if not 1 <= k <= K:
        raise ValueError(f"expert index {k} outside 1..{K}")
    if n < 1:
        raise ValueError(f"batch size must be >= 1, got {n}")
    start = ((k - 1) * n) // K
    if n - start <= 0:
        raise ValueError(f"expert {k} would see no samples in a batch of {n}")
    return start


def base_loss(y, y_hat) -> float:
    y = np.asarray(y, dtype=float)
    y_hat = np.asarray(y_hat, dtype=float)
    if y.shape != y_hat.shape:
        raise ValueError(f"shape mismatch {y.shape} vs {y_hat.shape}")
    if y.size == 0:
        raise ValueError("empty batch")
    return float(np.mean(np.abs(y - y_hat)))


def aux_loss(y, expert_preds, schedule: MaskSchedule) -> tuple[float, list[float]]:
    """Returns (aux, parts) with parts[0] the linear expert's MAE and
    parts[k] the masked MAE of MLP expert k. ``expert_preds`` is (K+1, N)."""
    y = np.asarray(y, dtype=float)
    preds = np.asarray(expert_preds, dtype=float)
    K = schedule.num_mlp_experts
    if preds.shape != (K + 1, y.size):
        raise ValueError(f"expert predictions have shape {preds.shape}, expected {(K + 1, y.size)}")
    n = y.size
    if n == 0:
        raise ValueError("empty batch")
    parts = [float(np.mean(np.abs(y - preds[0])))]
    for k in range(1, K + 1):
        s = mask_start(k, n, schedule)
        parts.append(float(np.mean(np.abs(y[s:] - preds[k, s:]))))
    return float(sum(parts) / (K + 1)), parts


def l1_mask(params: MoeParameters, target: L1Target) -> np.ndarray:
    names = ["gate_W", "gate_b"]
    if target is L1Target.OUTPUT_LAYERS:
        names.append("beta")
        for k in range(1, params.config.num_mlp_experts + 1):
            names += [f"W2_{k}", f"b2_{k}"]
    return params.mask(names)


def reg_loss(params: MoeParameters, weights: LossWeights) -> tuple[float, float]:
    theta = params.data
    l2 = weights.lambda1 * float(theta @ theta)
    l1 = weights.lambda2 * float(np.abs(theta[l1_mask(params, weights.l1_target)]).sum())
    return l2, l1


def combine(base: float, aux_parts: list[float], l2: float, l1: float, gamma: float) -> LossBreakdown:
    aux = float(sum(aux_parts) / len(aux_parts))
    total = gamma * base + (1.0 - gamma) * aux + l2 + l1
    return LossBreakdown(
        base=base, aux_linear=aux_parts[0], aux_mlp=list(aux_parts[1:]), aux=aux,
        reg_l2=l2, reg_l1=l1, total=total, gamma=gamma,
    )


def loss_breakdown(y, y_hat, expert_preds, params: MoeParameters, weights: LossWeights,
                   schedule: MaskSchedule) -> LossBreakdown:
    """Array form: ``y_hat`` is (N,), ``expert_preds`` is (K+1, N)."""
    base = base_loss(y, y_hat)
    _, parts = aux_loss(y, expert_preds, schedule)
    l2, l1 = reg_loss(params, weights)
    return combine(base, parts, l2, l1, weights.gamma)


def total_loss(y, predictions, params: MoeParameters, weights: LossWeights,
               schedule: MaskSchedule) -> LossBreakdown:
    y_hat = np.array([p.y_hat for p in predictions])
    experts = np.array([p.expert_outputs for p in predictions]).T
    return loss_breakdown(y, y_hat, experts, params, weights, schedule)
