import numpy as np
import pytest

from moe_forecast.data import SupervisedSet, make_supervised
from moe_forecast.evaluation import (
    evaluate_forecasts,
    format_table,
    mae,
    mase,
    pooled_regression_fit,
    pooled_regression_predict,
    recursive_forecast,
    rmse,
    seasonal_naive_forecast,
    summarize,
)
from moe_forecast.numerics import make_rng


def supervised(X, y):
    n = y.size
    return SupervisedSet(X, y, np.zeros(n, int), np.arange(n))


def test_mae_rmse_examples():
    assert mae([1, 2], [1, 2]) == 0 and rmse([1, 2], [1, 2]) == 0
    assert mae([0, 0], [3, 4]) == 3.5
    assert rmse([0, 0], [3, 4]) == pytest.approx(np.sqrt(12.5), abs=1e-15)
    with pytest.raises(ValueError):
        mae([], [])


def test_rmse_at_least_mae(rng):
    for _ in range(1000):
        n = int(rng.integers(1, 30))
        y, f = rng.normal(size=n), rng.normal(scale=3, size=n)
        assert rmse(y, f) >= mae(y, f) - 1e-15


def test_mase_unit_on_naive_identity():
    insample = np.array([1.0, 3.0, 2.0, 5.0, 4.0])  # |diffs| at lag 1: 2,1,3,1 -> mean 1.75
    fc = seasonal_naive_forecast(insample, 1, 2)
    y = fc + np.array([1.75, -1.75])
    assert mase(y, fc, insample, 1) == 1.0


def test_mase_scale_invariance(rng):
    y, f, ins = rng.normal(size=10), rng.normal(size=10), rng.normal(size=40)
    base = mase(y, f, ins, 7)
    for c in (2.0, 1e-3, 12345.6):
        assert mase(c * y, c * f, c * ins, 7) == pytest.approx(base, rel=1e-12)


def test_mase_scalar_transcription():
    ins = [3.0, 5.0, 4.0, 6.0, 8.0, 7.0, 9.0, 12.0, 10.0, 11.0, 14.0, 13.0]
    y, f = [15.0, 12.0, 16.0], [14.0, 14.0, 14.0]
    s = 3
    denom = sum(abs(ins[t] - ins[t - s]) for t in range(s, len(ins))) / (len(ins) - s)
    num = sum(abs(a - b) for a, b in zip(y, f)) / len(y)
    assert mase(y, f, ins, s) == pytest.approx(num / denom, abs=1e-15)


def test_mase_zero_scale():
    with pytest.raises(ZeroDivisionError):
        mase([1.0], [1.0], [2.0, 2.0, 2.0], 1)
    with pytest.raises(ValueError):
        mase([1.0], [1.0], [2.0, 3.0], 2)


def test_seasonal_naive_examples():
    ins = np.arange(1.0, 10.0)
    assert seasonal_naive_forecast(ins, 1, 4).tolist() == [9, 9, 9, 9]
    assert seasonal_naive_forecast(ins, 4, 4).tolist() == [6, 7, 8, 9]
    assert seasonal_naive_forecast(ins, 3, 7).tolist() == [7, 8, 9, 7, 8, 9, 7]
    with pytest.raises(ValueError):
        seasonal_naive_forecast(ins[:2], 3, 1)


def test_seasonal_naive_self_score(rng):
    series = rng.normal(size=60).cumsum()
    ins, test = series[:-7], series[-7:]
    fc = seasonal_naive_forecast(ins, 7, 7)
    denom = np.mean(np.abs(ins[7:] - ins[:-7]))
    assert mase(test, fc, ins, 7) == np.mean(np.abs(test - fc)) / denom


def test_pooled_regression_noiseless_recovery(rng):
    X = rng.normal(size=(300, 4))
    y = 0.7 + X @ np.array([0.5, -1.2, 0.3, 2.0])
    coef = pooled_regression_fit(supervised(X, y))
    np.testing.assert_allclose(coef, [0.7, 0.5, -1.2, 0.3, 2.0], rtol=0, atol=1e-8)


def test_pooled_regression_constant_target(rng):
    X = rng.normal(size=(50, 3))
    coef = pooled_regression_fit(supervised(X, np.full(50, 4.2)))
    assert coef[0] == pytest.approx(4.2, abs=1e-8)
    np.testing.assert_allclose(coef[1:], 0, atol=1e-8)


def test_pooled_regression_textbook_oracle(rng):
    X, y = rng.normal(size=(200, 9)), rng.normal(size=200)
    A = np.hstack([np.ones((200, 1)), X])
    oracle = np.linalg.lstsq(A, y, rcond=None)[0]
    np.testing.assert_allclose(pooled_regression_fit(supervised(X, y)), oracle, rtol=0, atol=1e-9)
    np.testing.assert_allclose(pooled_regression_predict(oracle, X), A @ oracle, atol=1e-12)


def test_pooled_regression_errors():
    with pytest.raises(ValueError):
        pooled_regression_fit(supervised(np.ones((3, 3)), np.ones(3)))
    with pytest.raises(np.linalg.LinAlgError):
        pooled_regression_fit(supervised(np.full((10, 2), np.inf), np.ones(10)))


def test_recursive_forecast_feeds_back():
    fc = recursive_forecast(lambda X: X.sum(axis=1), np.array([1.0, 1.0]), 2, 5)
    assert fc.tolist() == [2, 3, 5, 8, 13]


def test_summarize_examples(rng):
    s = summarize({"mae": [3.0]})
    assert s.mean["mae"] == s.median["mae"] == 3.0
    s = summarize({"mae": [1.0, 2.0, 3.0, 10.0]})
    assert (s.mean["mae"], s.median["mae"]) == (4.0, 2.5)
    vals = rng.normal(size=101).tolist()
    assert summarize({"x": vals}).median["x"] == sorted(vals)[50]
    shuffled = [vals[i] for i in rng.permutation(101)]
    assert summarize({"x": shuffled}).median["x"] == sorted(vals)[50]
    with pytest.raises(ValueError):
        summarize({})


def test_evaluate_and_table():
    series = [np.arange(30.0), np.sin(np.arange(40.0))]
    split = make_supervised(series, 2, 5)
    fcs = [a + 0.5 for a in split.actuals]
    summary = evaluate_forecasts(split.actuals, fcs, split.insample, [1, 7], ["a", "b"])
    assert summary.per_series["mae"] == [0.5, 0.5]
    assert set(summary.per_series) == {"mae", "rmse", "mase", "mase_s7"}
    assert summary.per_series["mase"][0] == pytest.approx(0.5)
    table = format_table({"m": summary})
    lines = table.splitlines()
    assert lines[0].startswith("model") and set(lines[1]) == {"-"}
    assert len({len(line) for line in lines}) == 1
    assert '"median"' in summary.to_json()
