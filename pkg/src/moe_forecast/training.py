"""Mini-batch Adam training of the mixture model."""

from __future__ import annotations

import json
import logging
import time
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from .autograd import backward
from .model import ModelConfig, MoeParameters, init_moe_parameters, predict
from .numerics import derive_seed, make_rng
from .objective import LossBreakdown, LossWeights, MaskSchedule

logger = logging.getLogger(__name__)


class TrainingDivergedError(FloatingPointError):
    def __init__(self, epoch: int, batch: int, detail: str = ""):
        self.epoch = epoch
        self.batch = batch
        super().__init__(f"training diverged at epoch {epoch}, batch {batch}" + (f": {detail}" if detail else ""))


@dataclass(frozen=True)
class TrainPlan:
    learning_rate: float = 1e-3
    weight_decay: float = 0.0
    batch_size: int = 256
    epochs: int = 20
    loss_weights: LossWeights = field(default_factory=LossWeights)
    seed: int = 0
    shuffle: bool | None = None
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    patience: int | None = None

    def __post_init__(self):
        if self.learning_rate < 0:
            raise ValueError("learning rate must be nonnegative")
        if self.batch_size < 1:
            raise ValueError("batch size must be >= 1")
        if self.epochs < 0:
            raise ValueError("epochs must be >= 0")
        if isinstance(self.loss_weights, dict):
            object.__setattr__(self, "loss_weights", LossWeights(**self.loss_weights))

    def to_dict(self) -> dict:
        d = asdict(self)
        d["loss_weights"]["l1_target"] = self.loss_weights.l1_target.value
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "TrainPlan":
        d = dict(d)
        if "loss_weights" in d:
            d["loss_weights"] = LossWeights(**d["loss_weights"])
        return cls(**d)

    def with_(self, **changes) -> "TrainPlan":
        return replace(self, **changes)


@dataclass
class AdamState:
    m: np.ndarray
    v: np.ndarray
    t: int = 0

    @classmethod
    def zeros(cls, size: int) -> "AdamState":
        return cls(np.zeros(size), np.zeros(size), 0)


@dataclass
class EpochRecord:
    epoch: int
    loss: LossBreakdown
    batches: int
    validation_mae: float | None = None


@dataclass
class TrainTrace:
    epochs: list[EpochRecord] = field(default_factory=list)
    seconds: float = 0.0
    stopped_early: bool = False

    def totals(self) -> list[float]:
        return [rec.loss.total for rec in self.epochs]

    def records(self) -> list[dict]:
        out = []
        for rec in self.epochs:
            row = {"epoch": rec.epoch, "batches": rec.batches, **rec.loss.to_dict()}
            if rec.validation_mae is not None:
                row["validation_mae"] = rec.validation_mae
            out.append(row)
        return out

    def to_jsonl(self, path) -> None:
        with open(path, "w") as fh:
            for row in self.records():
                fh.write(json.dumps(row) + "\n")


def adam_step(params: MoeParameters, grad: MoeParameters, state: AdamState, plan: TrainPlan,
              trainable: np.ndarray | None = None) -> tuple[MoeParameters, AdamState]:
    """In-place Adam update with bias correction (epsilon added after the
    bias-corrected square root). Entries outside ``trainable`` are untouched."""
    b1, b2 = plan.adam_beta1, plan.adam_beta2
    g = grad.data
    if trainable is not None:
        g = np.where(trainable, g, 0.0)
    state.t += 1
    state.m *= b1
    state.m += (1.0 - b1) * g
    state.v *= b2
    state.v += (1.0 - b2) * (g * g)
    bc1 = 1.0 - b1 ** state.t
    bc2 = 1.0 - b2 ** state.t
    update = (plan.learning_rate / bc1) * state.m / (np.sqrt(state.v / bc2) + plan.adam_eps)
    if plan.weight_decay:
        update = update + plan.learning_rate * plan.weight_decay * params.data
    if trainable is not None:
        update = np.where(trainable, update, 0.0)
    params.data -= update
    return params, state


def batch_slices(n: int, plan: TrainPlan, shuffle: bool, rng: np.random.Generator) -> list[np.ndarray]:
    order = rng.permutation(n) if shuffle else np.arange(n)
    return [order[i:i + plan.batch_size] for i in range(0, n, plan.batch_size)]


def _weighted_mean(parts: list[tuple[int, LossBreakdown]], gamma: float) -> LossBreakdown:
    total_n = sum(n for n, _ in parts)

    def avg(fn):
        return float(sum(n * fn(b) for n, b in parts) / total_n)

    K = len(parts[0][1].aux_mlp)
    return LossBreakdown(
        base=avg(lambda b: b.base),
        aux_linear=avg(lambda b: b.aux_linear),
        aux_mlp=[avg(lambda b, k=k: b.aux_mlp[k]) for k in range(K)],
        aux=avg(lambda b: b.aux),
        reg_l2=avg(lambda b: b.reg_l2),
        reg_l1=avg(lambda b: b.reg_l1),
        total=avg(lambda b: b.total),
        gamma=gamma,
    )


def fit(data, config: ModelConfig, plan: TrainPlan, init: MoeParameters | None = None,
        trainable: np.ndarray | None = None, validation=None) -> tuple[MoeParameters, TrainTrace]:
    """Train on a supervised set (anything with ``X`` and ``y``).

    With ``init`` the run starts from a copy of those parameters; otherwise
    from a fresh draw seeded by ``plan.seed``. Batches are contiguous
    chronological slices unless shuffling is on; ``plan.shuffle=None`` turns
    it on only for single-MLP-expert models, where the masks are inactive.
    """
    X = np.asarray(data.X, dtype=float)
    y = np.asarray(data.y, dtype=float)
    if X.shape[0] == 0:
        raise ValueError("cannot fit on an empty supervised set")
    if not (np.all(np.isfinite(X)) and np.all(np.isfinite(y))):
        raise ValueError("training data contains non-finite values")
    if plan.epochs < 1:
        raise ValueError("fit needs at least one epoch")
    if init is not None:
        if init.config != config:
            raise ValueError(f"initial parameters built for {init.config}, expected {config}")
        params = init.copy()
    else:
        params = init_moe_parameters(config, make_rng(derive_seed(plan.seed, "init")))
    shuffle = plan.shuffle if plan.shuffle is not None else config.num_mlp_experts <= 1
    rng = make_rng(derive_seed(plan.seed, "shuffle"))
    schedule = MaskSchedule(config.num_mlp_experts)
    state = AdamState.zeros(params.size)
    trace = TrainTrace()
    best = (np.inf, None)
    stale = 0
    start = time.perf_counter()

    for epoch in range(plan.epochs):
        parts = []
        slices = batch_slices(X.shape[0], plan, shuffle, rng)
        for b, idx in enumerate(slices):
            if shuffle:
                Xb, yb = X[idx], y[idx]
            else:
                Xb, yb = X[idx[0]:idx[-1] + 1], y[idx[0]:idx[-1] + 1]
            try:
                loss, grad = backward(params, config, Xb, yb, plan.loss_weights, schedule)
            except FloatingPointError as exc:
                raise TrainingDivergedError(epoch, b, str(exc)) from exc
            if not np.isfinite(loss.total):
                raise TrainingDivergedError(epoch, b, "non-finite loss")
            parts.append((len(idx), loss))
            adam_step(params, grad, state, plan, trainable)
            if not np.all(np.isfinite(params.data)):
                raise TrainingDivergedError(epoch, b, "non-finite parameters")
        record = EpochRecord(epoch=epoch, loss=_weighted_mean(parts, plan.loss_weights.gamma), batches=len(slices))
        if validation is not None:
            record.validation_mae = float(np.mean(np.abs(predict(params, config, validation.X) - validation.y)))
        trace.epochs.append(record)
        logger.debug("epoch %d total %.6g", epoch, record.loss.total)

        if plan.patience is not None and validation is not None:
            if record.validation_mae < best[0]:
                best, stale = (record.validation_mae, params.copy()), 0
            else:
                stale += 1
                if stale >= plan.patience:
                    params = best[1]
                    trace.stopped_early = True
                    break

    trace.seconds = time.perf_counter() - start
    return params, trace
