"""End-to-end studies shared by the CLI and the acceptance tests."""

from __future__ import annotations

import time
from dataclasses import dataclass, field, replace

import numpy as np

from .data import SupervisedSet, TimeSeriesDataset, lag_matrix, make_scaler, make_supervised
from .evaluation import (
    MetricSummary,
    evaluate_forecasts,
    mae,
    pooled_regression_fit,
    pooled_regression_predict,
    recursive_forecast_many,
    seasonal_naive_forecast,
)
from .model import ModelConfig, MoeParameters, predict
from .online import OnlinePlan, rolling_forecast
from .synthetic import regime_switch_ar1
from .training import TrainPlan, TrainTrace, fit


@dataclass
class FixedSchemeResult:
    params: MoeParameters
    trace: TrainTrace
    forecasts: list[np.ndarray]
    actuals: list[np.ndarray]
    insample: list[np.ndarray]
    series_ids: list[str]
    summary: MetricSummary
    baselines: dict[str, MetricSummary] = field(default_factory=dict)
    baseline_forecasts: dict[str, list[np.ndarray]] = field(default_factory=dict)
    seconds: float = 0.0


def _scaled_supervised(dataset: TimeSeriesDataset, num_lags: int, horizon: int, scale: str):
    raw = make_supervised(dataset, num_lags, horizon)
    scaler = make_scaler(scale, raw.insample)
    scaled_arrays = [scaler.transform(j, dataset.series[i].values) for j, i in enumerate(raw.kept)]
    return raw, scaler, make_supervised(scaled_arrays, num_lags, horizon)


def fixed_scheme(dataset: TimeSeriesDataset, config: ModelConfig, plan: TrainPlan, horizon: int,
                 scale: str = "mean-abs", seasonal_periods=None, baselines: bool = True) -> FixedSchemeResult:
    """Train once on every series' in-sample part, then forecast the last
    ``horizon`` points of each series recursively."""
    m = config.input_dim
    periods = seasonal_periods or [dataset.seasonal_period]
    start = time.perf_counter()
    raw, scaler, split = _scaled_supervised(dataset, m, horizon, scale)
    params, trace = fit(split.train, config, plan)
    histories = split.insample
    scaled_fc = recursive_forecast_many(lambda X: predict(params, config, X), histories, m, horizon)
    forecasts = [scaler.inverse(j, f) for j, f in enumerate(scaled_fc)]
    seconds = time.perf_counter() - start
    ids = [dataset.series[i].id for i in raw.kept]
    result = FixedSchemeResult(
        params=params, trace=trace, forecasts=forecasts, actuals=raw.actuals, insample=raw.insample,
        series_ids=ids, summary=evaluate_forecasts(raw.actuals, forecasts, raw.insample, periods, ids),
        seconds=seconds,
    )
    if baselines:
        coef = pooled_regression_fit(split.train)
        pr_scaled = recursive_forecast_many(lambda X: pooled_regression_predict(coef, X), histories, m, horizon)
        pr = [scaler.inverse(j, f) for j, f in enumerate(pr_scaled)]
        snaive = [seasonal_naive_forecast(ins, dataset.seasonal_period, horizon) for ins in raw.insample]
        result.baseline_forecasts = {"pooled_regression": pr, "seasonal_naive": snaive}
        result.baselines = {
            name: evaluate_forecasts(raw.actuals, fc, raw.insample, periods, ids)
            for name, fc in result.baseline_forecasts.items()
        }
    return result


# ------------------------------------------------------ regime switching

REGIME_LAGS = 5
REGIME_TEST = 400


@dataclass
class RegimeStudy:
    seed: int
    moe_mae: float
    pr_mae: float
    seconds: float

    @property
    def ratio(self) -> float:
        return self.moe_mae / self.pr_mae


def regime_study_config() -> tuple[ModelConfig, TrainPlan]:
    config = ModelConfig(input_dim=REGIME_LAGS, hidden_sizes=(20, 20, 20))
    plan = TrainPlan(learning_rate=1e-2, batch_size=256, epochs=100)
    return config, plan


def regime_switch_study(seed: int, config: ModelConfig | None = None, plan: TrainPlan | None = None) -> RegimeStudy:
    """Fit the mixture and pooled regression on the first 3600 points of a
    regime-switching series; score one-step forecasts on the last 400."""
    default_config, default_plan = regime_study_config()
    config = config or default_config
    plan = (plan or default_plan).with_(seed=seed)
    start = time.perf_counter()
    values = regime_switch_ar1(seed=seed)
    X, y = lag_matrix(values, config.input_dim)
    n_train = y.size - REGIME_TEST
    train = SupervisedSet(X[:n_train], y[:n_train], np.zeros(n_train, int), np.arange(n_train))
    params, _ = fit(train, config, plan)
    moe = mae(y[n_train:], predict(params, config, X[n_train:]))
    coef = pooled_regression_fit(train)
    pr = mae(y[n_train:], pooled_regression_predict(coef, X[n_train:]))
    return RegimeStudy(seed, moe, pr, time.perf_counter() - start)


# --------------------------------------------------------- ablation

def gamma_ablation(series, config: ModelConfig, plan: OnlinePlan, gammas, seeds, scale: str = "mean-abs",
                   seasonal_periods=(1, 7)) -> list[dict]:
    """Rolling backtest per (gamma, seed); shared seeds across gammas."""
    rows = []
    for gamma in gammas:
        for seed in seeds:
            def with_gamma(p: TrainPlan) -> TrainPlan:
                return p.with_(loss_weights=replace(p.loss_weights, gamma=gamma), seed=seed)

            run_plan = OnlinePlan(
                initial_plan=with_gamma(plan.initial_plan), initial_window=plan.initial_window,
                update_plan=with_gamma(plan.update_plan), update_window=plan.update_window,
                horizon=plan.horizon, freeze_hidden_on_update=plan.freeze_hidden_on_update,
            )
            report = rolling_forecast(series, config, run_plan, scale=scale, seasonal_periods=seasonal_periods)
            rows.append({"gamma": float(gamma), "seed": int(seed), **report.metrics,
                         "total_seconds": report.total_seconds, "report": report})
    return rows
