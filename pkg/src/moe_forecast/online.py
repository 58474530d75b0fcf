"""Rolling-window backtests with partial online learning.

The first window is trained from scratch with the initial plan. Every later
window starts from the previous window's parameters and is refit with the
lighter update plan on a shorter trailing window. Windows advance one
observation at a time and each produces a one-step-ahead forecast.
"""

from __future__ import annotations

import csv
import json
import logging
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import training
from .data import lag_matrix, make_scaler
from .evaluation import mae, mase, rmse
from .model import ModelConfig, MoeParameters, predict
from .numerics import derive_seed, make_rng
from .training import TrainPlan

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class OnlinePlan:
    initial_plan: TrainPlan = field(default_factory=TrainPlan)
    initial_window: int = 3650
    update_plan: TrainPlan = field(default_factory=TrainPlan)
    update_window: int = 365
    horizon: int = 30
    freeze_hidden_on_update: bool = False

    def __post_init__(self):
        if self.horizon < 1:
            raise ValueError("horizon must be >= 1")

    def validate(self, config: ModelConfig) -> None:
        for name in ("initial_window", "update_window"):
            if getattr(self, name) < config.input_dim + 1:
                raise ValueError(f"{name}={getattr(self, name)} must be >= input_dim + 1 = {config.input_dim + 1}")

    def required_length(self) -> int:
        return self.initial_window + self.horizon

    def to_dict(self) -> dict:
        return {
            "initial_plan": self.initial_plan.to_dict(),
            "initial_window": self.initial_window,
            "update_plan": self.update_plan.to_dict(),
            "update_window": self.update_window,
            "horizon": self.horizon,
            "freeze_hidden_on_update": self.freeze_hidden_on_update,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "OnlinePlan":
        d = dict(d)
        for key in ("initial_plan", "update_plan"):
            if key in d and isinstance(d[key], dict):
                d[key] = TrainPlan.from_dict(d[key])
        return cls(**d)


@dataclass
class BacktestReport:
    forecasts: np.ndarray
    actuals: np.ndarray
    target_index: np.ndarray
    metrics: dict[str, float]
    total_seconds: float
    window_seconds: list[float]
    fit_seconds: list[float]
    seasonal_periods: list[int] = field(default_factory=list)
    meta: dict = field(default_factory=dict)

    def recompute_metrics(self, insample=None) -> dict[str, float]:
        out = {"mae": mae(self.actuals, self.forecasts), "rmse": rmse(self.actuals, self.forecasts)}
        if insample is not None:
            for s in self.seasonal_periods:
                out[f"mase_s{s}"] = mase(self.actuals, self.forecasts, insample, s)
        return out

    def to_dict(self, timings: bool = True) -> dict:
        out = {
            "metrics": self.metrics,
            "forecasts": self.forecasts.tolist(),
            "actuals": self.actuals.tolist(),
            "target_index": self.target_index.tolist(),
            **self.meta,
        }
        if timings:
            out["timing"] = self.timings()
        return out

    def timings(self) -> dict:
        return {
            "total_seconds": self.total_seconds,
            "window_seconds": self.window_seconds,
            "fit_seconds": self.fit_seconds,
        }

    def write(self, out_dir, stem: str = "rolling") -> dict[str, str]:
        """Write ``<stem>_report.json`` and ``<stem>_forecasts.csv`` (both
        reproducible for a fixed seed) plus ``<stem>_timings.json``."""
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        report = out / f"{stem}_report.json"
        report.write_text(json.dumps(self.to_dict(timings=False), indent=2))
        timing = out / f"{stem}_timings.json"
        timing.write_text(json.dumps(self.timings(), indent=2))
        table = out / f"{stem}_forecasts.csv"
        with open(table, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["step", "target_index", "actual", "forecast"])
            for i, (t, a, f) in enumerate(zip(self.target_index, self.actuals, self.forecasts)):
                w.writerow([i + 1, int(t), repr(float(a)), repr(float(f))])
        return {"report": str(report), "forecasts": str(table), "timings": str(timing)}


def hidden_mask(params: MoeParameters) -> np.ndarray:
    """True for every entry that stays trainable when hidden layers freeze."""
    frozen = []
    for k in range(1, params.config.num_mlp_experts + 1):
        frozen += [f"W1_{k}", f"b1_{k}"]
    return ~params.mask(frozen)


def warm_start_fit(prev: MoeParameters, window_data, config: ModelConfig, update_plan: TrainPlan,
                   freeze_hidden: bool = False) -> MoeParameters:
    """Refit from ``prev``; with ``freeze_hidden`` the MLP input layers stay
    bit-identical. Zero epochs returns a copy of ``prev``."""
    if prev.config != config:
        raise ValueError(f"previous parameters built for {prev.config}, expected {config}")
    if update_plan.epochs == 0:
        return prev.copy()
    trainable = hidden_mask(prev) if freeze_hidden else None
    params, _ = training.fit(window_data, config, update_plan, init=prev, trainable=trainable)
    return params


@dataclass
class _Window:
    X: np.ndarray
    y: np.ndarray


def _window(values: np.ndarray, end: int, size: int, num_lags: int) -> _Window:
    X, y = lag_matrix(values[end - size:end], num_lags)
    return _Window(X, y)


def rolling_forecast(series, config: ModelConfig, plan: OnlinePlan, warm_start: bool = True,
                     scale: str = "mean-abs", seasonal_periods=(1, 7)) -> BacktestReport:
    """One-step-ahead rolling backtest over the last ``plan.horizon`` points.

    ``warm_start=False`` gives the cold variant: identical windows and plans,
    but later windows are fit from a fresh initialisation.
    """
    values = np.asarray(series, dtype=float)
    plan.validate(config)
    H = plan.horizon
    m = config.input_dim
    if values.size < plan.required_length():
        raise ValueError(
            f"series has {values.size} values; rolling protocol needs at least "
            f"{plan.required_length()} (initial window {plan.initial_window} + horizon {H})"
        )
    first_target = values.size - H
    scaler = make_scaler(scale, [values[:first_target]])
    scaled = scaler.transform(0, values)

    forecasts = np.empty(H)
    window_seconds, fit_seconds = [], []
    params: MoeParameters | None = None
    start_all = time.perf_counter()
    for step in range(H):
        t0 = time.perf_counter()
        target = first_target + step
        if step == 0:
            win = _window(scaled, target, plan.initial_window, m)
            f0 = time.perf_counter()
            params, _ = training.fit(win, config, plan.initial_plan)
            fit_seconds.append(time.perf_counter() - f0)
        else:
            win = _window(scaled, target, plan.update_window, m)
            update = plan.update_plan.with_(seed=derive_seed(plan.update_plan.seed, "window", step))
            f0 = time.perf_counter()
            if update.epochs > 0 and warm_start:
                params = warm_start_fit(params, win, config, update, plan.freeze_hidden_on_update)
            elif update.epochs > 0:
                params, _ = training.fit(win, config, update, init=None)
            fit_seconds.append(time.perf_counter() - f0)
        lags = scaled[target - m:target][None, :]
        forecasts[step] = scaler.inverse(0, predict(params, config, lags))[0]
        window_seconds.append(time.perf_counter() - t0)
    total = time.perf_counter() - start_all

    actuals = values[first_target:].copy()
    periods = [int(s) for s in seasonal_periods]
    report = BacktestReport(
        forecasts=forecasts, actuals=actuals, target_index=np.arange(first_target, values.size),
        metrics={}, total_seconds=total, window_seconds=window_seconds, fit_seconds=fit_seconds,
        seasonal_periods=periods,
        meta={"warm_start": warm_start, "scale": scale, "config": config.to_dict(), "plan": plan.to_dict()},
    )
    insample = values[:first_target]
    report.metrics = report.recompute_metrics(insample if periods else None)
    return report


def fixed_one_step_forecast(series, config: ModelConfig, plan: OnlinePlan, scale: str = "mean-abs") -> np.ndarray:
    """Train once on the initial window and forecast each test point one step
    ahead from realised lags, never refitting."""
    values = np.asarray(series, dtype=float)
    H, m = plan.horizon, config.input_dim
    first_target = values.size - H
    scaler = make_scaler(scale, [values[:first_target]])
    scaled = scaler.transform(0, values)
    params, _ = training.fit(_window(scaled, first_target, plan.initial_window, m), config, plan.initial_plan)
    # row by row, like the rolling loop, so the two agree to the last bit
    X, _ = lag_matrix(scaled[first_target - m:], m)
    return np.array([scaler.inverse(0, predict(params, config, x[None, :]))[0] for x in X])


# ----------------------------------------------------------- tuning

SEARCH_SPACE = {
    "neurons": (1, 50),
    "initial_lr": (1e-5, 1e-2),
    "update_lr": (1e-4, 1e-2),
    "initial_window": (730, 3650),
    "update_window": (1, 1095),
}


@dataclass
class SearchResult:
    config: ModelConfig
    plan: OnlinePlan
    score: float
    trials: list[dict]


def random_search(series, base_config: ModelConfig, base_plan: OnlinePlan, n_trials: int, seed: int,
                  scale: str = "mean-abs", space: dict | None = None) -> SearchResult:
    """Seeded random search over neurons, learning rates and window sizes.

    Scores each candidate by rolling MAE on the validation block: the
    ``horizon`` points just before the test block. Log-uniform draws for
    learning rates, uniform integers otherwise.
    """
    space = {**SEARCH_SPACE, **(space or {})}
    values = np.asarray(series, dtype=float)
    H = base_plan.horizon
    dev = values[: values.size - H]
    rng = make_rng(derive_seed(seed, "search"))
    m = base_config.input_dim
    max_window = dev.size - H
    trials = []
    best: SearchResult | None = None
    for i in range(n_trials):
        h = int(rng.integers(space["neurons"][0], space["neurons"][1] + 1))
        lr0 = float(np.exp(rng.uniform(*np.log(space["initial_lr"]))))
        lr1 = float(np.exp(rng.uniform(*np.log(space["update_lr"]))))
        w0 = int(rng.integers(space["initial_window"][0], space["initial_window"][1] + 1))
        w1 = int(rng.integers(space["update_window"][0], space["update_window"][1] + 1))
        w0 = min(max(w0, m + 1), max_window)
        w1 = min(max(w1, m + 1), max_window)
        config = ModelConfig(
            input_dim=m, hidden_sizes=(h,) * base_config.num_mlp_experts,
            hidden_activation=base_config.hidden_activation, gate_leaky_slope=base_config.gate_leaky_slope,
            hidden_leaky_slope=base_config.hidden_leaky_slope, gate_bias=base_config.gate_bias,
        )
        plan = OnlinePlan(
            initial_plan=base_plan.initial_plan.with_(learning_rate=lr0), initial_window=w0,
            update_plan=base_plan.update_plan.with_(learning_rate=lr1), update_window=w1,
            horizon=H, freeze_hidden_on_update=base_plan.freeze_hidden_on_update,
        )
        try:
            score = rolling_forecast(dev, config, plan, scale=scale, seasonal_periods=()).metrics["mae"]
        except (FloatingPointError, ValueError) as exc:
            logger.warning("trial %d failed: %s", i, exc)
            score = float("inf")
        trials.append({"trial": i, "neurons": h, "initial_lr": lr0, "update_lr": lr1,
                       "initial_window": w0, "update_window": w1, "validation_mae": score})
        if best is None or score < best.score:
            best = SearchResult(config, plan, score, trials)
    best.trials = trials
    return best
