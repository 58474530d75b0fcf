"""Accuracy metrics, aggregation across series and the two reference
forecasters (seasonal naive and pooled linear regression)."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np


def _pair(y, y_hat) -> tuple[np.ndarray, np.ndarray]:
    y = np.asarray(y, dtype=float)
    y_hat = np.asarray(y_hat, dtype=float)
    if y.shape != y_hat.shape:
        raise ValueError(f"shape mismatch {y.shape} vs {y_hat.shape}")
    if y.size == 0:
        raise ValueError("metrics need at least one observation")
    return y, y_hat


def mae(y, y_hat) -> float:
    y, y_hat = _pair(y, y_hat)
    return float(np.mean(np.abs(y - y_hat)))


def rmse(y, y_hat) -> float:
    y, y_hat = _pair(y, y_hat)
    return float(np.sqrt(np.mean((y - y_hat) ** 2)))


def mase_scale(insample, seasonal_period: int) -> float:
    insample = np.asarray(insample, dtype=float)
    s = int(seasonal_period)
    if s < 1:
        raise ValueError("seasonal period must be >= 1")
    if insample.size <= s:
        raise ValueError(f"in-sample length {insample.size} must exceed the seasonal period {s}")
    return float(np.mean(np.abs(insample[s:] - insample[:-s])))


def mase(y_test, y_hat, y_insample, seasonal_period: int) -> float:
    """Test MAE over the in-sample MAE of the lag-``s`` naive forecast.

    Raises ``ZeroDivisionError`` when the in-sample series is constant at lag
    ``s`` (the scale is zero).
    """
    scale = mase_scale(y_insample, seasonal_period)
    if scale == 0.0:
        raise ZeroDivisionError("MASE undefined: in-sample seasonal differences are all zero")
    return mae(y_test, y_hat) / scale


def seasonal_naive_forecast(insample, seasonal_period: int, horizon: int) -> np.ndarray:
    insample = np.asarray(insample, dtype=float)
    s = int(seasonal_period)
    if s < 1 or horizon < 1:
        raise ValueError("seasonal period and horizon must be >= 1")
    if insample.size < s:
        raise ValueError(f"need at least {s} in-sample values, got {insample.size}")
    T = insample.size
    h = np.arange(1, horizon + 1)
    # y_{T+h-s*ceil(h/s)}, 1-based -> 0-based index T-1+h-s*ceil(h/s)
    idx = T - 1 + h - s * ((h + s - 1) // s)
    return insample[idx].copy()


# ------------------------------------------------------- pooled regression

RIDGE_JITTER = 1e-10


def pooled_regression_fit(supervised, jitter: float = RIDGE_JITTER) -> np.ndarray:
    """Least-squares (intercept, slopes...) on the pooled lag matrix via the
    normal equations with a small ridge term on the diagonal."""
    X = np.asarray(supervised.X, dtype=float)
    y = np.asarray(supervised.y, dtype=float)
    n, m = X.shape
    if n <= m:
        raise ValueError(f"pooled regression needs more rows ({n}) than lags ({m})")
    A = np.hstack([np.ones((n, 1)), X])
    gram = A.T @ A
    gram[np.diag_indices_from(gram)] += jitter
    try:
        chol = np.linalg.cholesky(gram)
    except np.linalg.LinAlgError as exc:
        raise np.linalg.LinAlgError("pooled regression design is rank deficient") from exc
    rhs = A.T @ y
    z = np.linalg.solve(chol, rhs)
    coef = np.linalg.solve(chol.T, z)
    if not np.all(np.isfinite(coef)):
        raise np.linalg.LinAlgError("pooled regression produced non-finite coefficients")
    return coef


def pooled_regression_predict(coef: np.ndarray, X) -> np.ndarray:
    X = np.atleast_2d(np.asarray(X, dtype=float))
    return coef[0] + X @ coef[1:]


# --------------------------------------------------------- multi-step

def recursive_forecast(predict_fn: Callable[[np.ndarray], np.ndarray], history, num_lags: int,
                       horizon: int) -> np.ndarray:
    """Feed one-step forecasts back in as lags for ``horizon`` steps."""
    history = np.asarray(history, dtype=float)
    if history.size < num_lags:
        raise ValueError(f"need {num_lags} history values, got {history.size}")
    window = list(history[-num_lags:])
    out = np.empty(horizon)
    for h in range(horizon):
        out[h] = float(predict_fn(np.array(window)[None, :])[0])
        window = window[1:] + [out[h]]
    return out


def recursive_forecast_many(predict_fn, histories: list[np.ndarray], num_lags: int, horizon: int) -> list[np.ndarray]:
    """Recursive forecasts for many series at once, batching each step."""
    windows = np.array([np.asarray(h, float)[-num_lags:] for h in histories])
    out = np.empty((len(histories), horizon))
    for h in range(horizon):
        step = np.asarray(predict_fn(windows), dtype=float)
        out[:, h] = step
        windows = np.hstack([windows[:, 1:], step[:, None]])
    return list(out)


# ------------------------------------------------------------ summaries

METRICS = ("mae", "rmse", "mase")


@dataclass
class MetricSummary:
    series_ids: list[str]
    per_series: dict[str, list[float]]
    mean: dict[str, float] = field(default_factory=dict)
    median: dict[str, float] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "series": self.series_ids,
            "per_series": self.per_series,
            "mean": self.mean,
            "median": self.median,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    def table(self, title: str = "") -> str:
        return format_table({title or "model": self}, list(self.per_series))


def _median(values: list[float]) -> float:
    ordered = sorted(values)
    n = len(ordered)
    mid = n // 2
    return ordered[mid] if n % 2 else (ordered[mid - 1] + ordered[mid]) / 2.0


def summarize(per_series: dict[str, list[float]], series_ids: list[str] | None = None) -> MetricSummary:
    lengths = {len(v) for v in per_series.values()}
    if not per_series or lengths == {0}:
        raise ValueError("summaries need at least one series")
    if len(lengths) != 1:
        raise ValueError("every metric needs one value per series")
    n = lengths.pop()
    ids = series_ids or [str(i) for i in range(n)]
    summary = MetricSummary(ids, {k: [float(x) for x in v] for k, v in per_series.items()})
    for name, values in summary.per_series.items():
        finite = [v for v in values if math.isfinite(v)]
        summary.mean[name] = float(sum(finite) / len(finite)) if finite else float("nan")
        summary.median[name] = _median(finite) if finite else float("nan")
    return summary


def evaluate_forecasts(actuals: list[np.ndarray], forecasts: list[np.ndarray], insample: list[np.ndarray],
                       seasonal_periods, series_ids: list[str] | None = None) -> MetricSummary:
    """Per-series MAE, RMSE and MASE (one MASE column per seasonal period;
    the first period is reported as ``mase``)."""
    periods = [seasonal_periods] if isinstance(seasonal_periods, int) else list(seasonal_periods)
    cols: dict[str, list[float]] = {"mae": [], "rmse": []}
    for i, s in enumerate(periods):
        cols["mase" if i == 0 else f"mase_s{s}"] = []
    for y, f, ins in zip(actuals, forecasts, insample):
        cols["mae"].append(mae(y, f))
        cols["rmse"].append(rmse(y, f))
        for i, s in enumerate(periods):
            key = "mase" if i == 0 else f"mase_s{s}"
            try:
                cols[key].append(mase(y, f, ins, s))
            except (ZeroDivisionError, ValueError):
                cols[key].append(float("nan"))
    return summarize(cols, series_ids)


def format_table(summaries: dict[str, MetricSummary], metrics: list[str] | None = None) -> str:
    """Aligned text table: one row per model, mean and median per metric."""
    metrics = metrics or list(next(iter(summaries.values())).per_series)
    header = ["model"] + [f"{m} {agg}" for m in metrics for agg in ("mean", "median")]
    rows = [header]
    for name, s in summaries.items():
        row = [name]
        for m in metrics:
            row += [f"{s.mean.get(m, float('nan')):.4f}", f"{s.median.get(m, float('nan')):.4f}"]
        rows.append(row)
    widths = [max(len(r[j]) for r in rows) for j in range(len(header))]
    lines = ["  ".join(c.ljust(w) if j == 0 else c.rjust(w) for j, (c, w) in enumerate(zip(r, widths))) for r in rows]
    lines.insert(1, "-" * len(lines[0]))
    return "\n".join(lines)
