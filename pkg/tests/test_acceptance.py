"""Acceptance criteria 1-10. Each test records one PASS/FAIL/SKIP line that
is echoed in the pytest terminal summary.

Criteria 8 and 9 need the Saugeen river-flow file from the Monash archive.
Point ``MOE_SAUGEEN_TSF`` at it (or place it at ``data/saugeenday_dataset.tsf``);
without it they skip.
"""

import os
import time
from pathlib import Path

import numpy as np
import pytest

from moe_forecast import cli
from moe_forecast.autograd import backward, fd_gradient, relative_error
from moe_forecast.data import Frequency, SupervisedSet, TimeSeriesDataset, parse_tsf, write_tsf
from moe_forecast.evaluation import (
    mae,
    mase,
    pooled_regression_fit,
    rmse,
    seasonal_naive_forecast,
)
from moe_forecast.experiments import fixed_scheme, gamma_ablation, regime_study_config, regime_switch_study
from moe_forecast.model import ModelConfig, MoeParameters, forward_batch, forward_cached, gate_forward, softmax_rows
from moe_forecast.numerics import make_rng
from moe_forecast.objective import LossWeights, MaskSchedule, total_loss
from moe_forecast.online import OnlinePlan, rolling_forecast
from moe_forecast.synthetic import drifting_mean, regime_switch_ar1
from moe_forecast.training import TrainPlan

from conftest import random_params, record_criterion, skip_criterion

SEEDS = [0, 1, 2, 3, 4]


def saugeen_path() -> Path | None:
    for candidate in (os.environ.get("MOE_SAUGEEN_TSF"), "data/saugeenday_dataset.tsf"):
        if candidate and Path(candidate).is_file():
            return Path(candidate)
    return None


# 1 ---------------------------------------------------------------------

def test_criterion_01_gradient_oracle():
    start = time.perf_counter()
    worst = {}
    g = make_rng(100)
    X, y = g.normal(size=(16, 5)), g.normal(size=16)
    for activation in ("relu", "tanh"):
        config = ModelConfig(input_dim=5, hidden_sizes=(3, 4), hidden_activation=activation)
        params = random_params(config, 101)
        # tanh run: targets far from every expert output, so no MAE kink is near
        yy = y + 25.0 if activation == "tanh" else y
        for gamma in (0.0, 0.25, 1.0):
            w = LossWeights(gamma=gamma, lambda1=1e-3, lambda2=1e-3)
            _, analytic = backward(params, config, X, yy, w)
            numeric = fd_gradient(params, config, X, yy, w, step=1e-6)
            err = relative_error(analytic.flatten(), numeric.flatten()).max()
            worst[activation] = max(worst.get(activation, 0.0), err)
    seconds = time.perf_counter() - start
    ok = worst["relu"] < 1e-4 and worst["tanh"] < 1e-6 and seconds < 5
    record_criterion(1, ok, f"max rel err relu {worst['relu']:.2e}, tanh {worst['tanh']:.2e}, {seconds:.2f} s")
    assert ok


# 2 ---------------------------------------------------------------------

def test_criterion_02_mask_arithmetic():
    mismatches = 0
    for K in (1, 2, 3, 5):
        schedule = MaskSchedule(K)
        for N in range(1, 51):
            for k in range(1, K + 1):
                # brute force with exact rationals: floor(((k-1)/K) * N)
                cut = ((k - 1) * N) // K
                brute = sum(1 for n in range(1, N + 1) if n > cut)
                if schedule.counts(N)[k - 1] != brute:
                    mismatches += 1
    record_criterion(2, mismatches == 0, f"{mismatches} mismatches over K in {{1,2,3,5}}, N in 1..50")
    assert mismatches == 0


# 3 ---------------------------------------------------------------------

def test_criterion_03_loss_decomposition():
    g = make_rng(300)
    worst = 0.0
    exact_gamma_one = True
    for i in range(1000):
        K = int(g.integers(0, 4))
        config = ModelConfig(input_dim=int(g.integers(1, 5)), hidden_sizes=tuple(int(h) for h in g.integers(1, 4, size=K)))
        params = MoeParameters(config, g.normal(size=MoeParameters(config).size))
        N = int(g.integers(1, 20))
        X, y = g.normal(size=(N, config.input_dim)), g.normal(size=N)
        gamma = 1.0 if i % 10 == 0 else float(g.uniform())
        w = LossWeights(gamma=gamma, lambda1=float(g.uniform(0, 0.1)), lambda2=float(g.uniform(0, 0.1)))
        b = total_loss(y, forward_batch(params, config, X), params, w, MaskSchedule(K))
        worst = max(worst, abs(b.total - (gamma * b.base + (1 - gamma) * b.aux + b.reg_l2 + b.reg_l1)))
        if gamma == 1.0 and b.total != b.base + b.reg_l2 + b.reg_l1:
            exact_gamma_one = False
    ok = worst <= 1e-12 and exact_gamma_one
    record_criterion(3, ok, f"max decomposition gap {worst:.1e}; gamma=1 exact: {exact_gamma_one}")
    assert ok


# 4 ---------------------------------------------------------------------

def test_criterion_04_gate_properties():
    config = ModelConfig(input_dim=6, hidden_sizes=(2, 2, 2, 2))
    params = random_params(config, 400, scale=1.0)
    X = make_rng(401).normal(scale=2.0, size=(10_000, 6))
    W = forward_cached(params, config, X).gate_weights
    positive = bool(np.all(W > 0))
    sum_err = float(np.abs(W.sum(axis=1) - 1).max())
    z = make_rng(402).normal(scale=3.0, size=(10_000, 5))
    shift = make_rng(403).normal(scale=10.0, size=(10_000, 1))
    shift_err = float(np.abs(softmax_rows(z + shift) - softmax_rows(z)).max())
    single = gate_forward(params, X[0])
    row_err = float(np.abs(single - W[0]).max())
    ok = positive and sum_err <= 1e-9 and shift_err <= 1e-12 and row_err <= 1e-15
    record_criterion(4, ok, f"all positive {positive}, max |sum-1| {sum_err:.1e}, shift gap {shift_err:.1e}")
    assert ok


# 5 ---------------------------------------------------------------------

def test_criterion_05_metric_oracles():
    g = make_rng(500)
    # seasonal-naive identity: test errors equal the in-sample mean |seasonal diff|
    ins = g.normal(size=60).cumsum()
    s, H = 7, 14
    fc = seasonal_naive_forecast(ins, s, H)
    scale = np.mean(np.abs(ins[s:] - ins[:-s]))
    y = fc + scale * np.where(np.arange(H) % 2, 1.0, -1.0)
    identity = mase(y, fc, ins, s)
    # scale invariance
    yt, ft = g.normal(size=20), g.normal(size=20)
    base = mase(yt, ft, ins, 1)
    inv_gap = max(abs(mase(c * yt, c * ft, c * ins, 1) - base) for c in (0.01, 3.0, 1e4))
    # rmse >= mae
    rmse_ok = all(rmse(a, b) >= mae(a, b) for a, b in (
        (g.normal(size=n), g.normal(size=n)) for n in g.integers(1, 50, size=1000)))
    # noiseless pooled regression
    X = g.normal(size=(400, 9))
    coef = np.concatenate([[1.3], g.uniform(-1, 1, size=9)])
    Y = coef[0] + X @ coef[1:]
    est = pooled_regression_fit(SupervisedSet(X, Y, np.zeros(400, int), np.arange(400)))
    pr_err = float(np.abs(est - coef).max())
    ok = abs(identity - 1.0) <= 1e-12 and inv_gap <= 1e-12 and rmse_ok and pr_err <= 1e-8
    record_criterion(5, ok, f"MASE identity {identity:.15f}, invariance gap {inv_gap:.1e}, "
                            f"RMSE>=MAE {rmse_ok}, PR coef err {pr_err:.1e}")
    assert ok


# 6 ---------------------------------------------------------------------

def test_criterion_06_determinism(tmp_path):
    arrays = [drifting_mean(n=300, seed=s) for s in range(2)]
    ds = TimeSeriesDataset.from_arrays(arrays, Frequency.DAILY, name="det")
    ds.horizon = 8
    write_tsf(ds, tmp_path / "det.tsf")
    common = ["--dataset", str(tmp_path / "det.tsf"), "--lags", "4", "--experts", "3", "--hidden", "5",
              "--epochs", "4", "--seed", "11"]
    rolling = ["--initial-window", "200", "--update-window", "60", "--update-epochs", "2", "--horizon", "5"]
    for run in ("a", "b"):
        assert cli.main(["train", *common, "--out", str(tmp_path / run / "train")]) == 0
        assert cli.main(["rolling", *common, *rolling, "--out", str(tmp_path / run / "rolling")]) == 0
    files = ["train/trace.jsonl", "train/checkpoint.json", "train/metrics.json", "train/forecasts.csv",
             "rolling/rolling_report.json", "rolling/rolling_forecasts.csv"]
    differing = [f for f in files if (tmp_path / "a" / f).read_bytes() != (tmp_path / "b" / f).read_bytes()]
    record_criterion(6, not differing, f"{len(files) - len(differing)}/{len(files)} artefacts bit-identical")
    assert not differing


# 7 ---------------------------------------------------------------------

def test_criterion_07_regime_switch_study():
    start = time.perf_counter()
    config, plan = regime_study_config()
    assert plan.loss_weights.gamma == 0.25 and config.num_mlp_experts == 3
    studies = [regime_switch_study(seed, config, plan) for seed in SEEDS]
    seconds = time.perf_counter() - start
    ratios = [s.ratio for s in studies]
    median = float(np.median(ratios))
    ok = median <= 0.9 and seconds < 120
    record_criterion(7, ok, f"median MoE/PR MAE ratio {median:.3f} (per seed {', '.join(f'{r:.3f}' for r in ratios)}), "
                            f"{seconds:.1f} s")
    assert ok


# 8 ---------------------------------------------------------------------

def test_criterion_08_saugeen_fixed_scheme():
    path = saugeen_path()
    if path is None:
        skip_criterion(8, "Saugeen .tsf not available (set MOE_SAUGEEN_TSF)")
    start = time.perf_counter()
    ds = parse_tsf(path)
    config = ModelConfig(input_dim=9, hidden_sizes=(20, 20, 20))
    result = fixed_scheme(ds, config, TrainPlan(), horizon=30, seasonal_periods=[1, 7], baselines=False)
    seconds = time.perf_counter() - start
    m1, m7 = result.summary.mean["mase"], result.summary.mean["mase_s7"]
    # gate on the weekly scaling used by the Monash archive for daily data; s=1 is reported alongside
    ok = m7 <= 1.60 and seconds < 300
    record_criterion(8, ok, f"MASE s=7 {m7:.3f} (reference 1.41), s=1 {m1:.3f}, {seconds:.1f} s")
    assert ok


# 9 ---------------------------------------------------------------------

def saugeen_online_plan() -> OnlinePlan:
    initial = TrainPlan(learning_rate=1e-3, epochs=20, batch_size=256)
    return OnlinePlan(initial_plan=initial, initial_window=3650,
                      update_plan=initial.with_(learning_rate=1e-3), update_window=365, horizon=30)


def test_criterion_09_saugeen_rolling_and_ablation():
    path = saugeen_path()
    if path is None:
        skip_criterion(9, "Saugeen .tsf not available (set MOE_SAUGEEN_TSF)")
    start = time.perf_counter()
    values = parse_tsf(path).series[0].values
    config = ModelConfig(input_dim=9, hidden_sizes=(20, 20, 20))
    plan = saugeen_online_plan()
    report = rolling_forecast(values, config, plan)
    rows = gamma_ablation(values, config, plan, [0.25, 1.0], SEEDS)
    med = {g: float(np.median([r["mae"] for r in rows if r["gamma"] == g])) for g in (0.25, 1.0)}
    seconds = time.perf_counter() - start
    mae_v, rmse_v = report.metrics["mae"], report.metrics["rmse"]
    ok = 5.6 <= mae_v <= 8.4 and 11.7 <= rmse_v <= 17.5 and med[0.25] < med[1.0] and seconds < 900
    record_criterion(9, ok, f"rolling MAE {mae_v:.2f}, RMSE {rmse_v:.2f}; median MAE gamma 0.25 {med[0.25]:.2f} "
                            f"vs gamma 1 {med[1.0]:.2f}; {seconds:.0f} s")
    assert ok


# 10 --------------------------------------------------------------------

def test_criterion_10_online_speedup():
    values = regime_switch_ar1(seed=0)
    config, _ = regime_study_config()
    epochs = 10
    initial = TrainPlan(learning_rate=1e-2, epochs=epochs, batch_size=256, seed=0)
    warm_plan = OnlinePlan(initial_plan=initial, initial_window=1200,
                           update_plan=initial.with_(learning_rate=1e-3, seed=1), update_window=200, horizon=100)
    # cold: every window retrained from scratch with the full plan and window
    cold_plan = OnlinePlan(initial_plan=initial, initial_window=1200,
                           update_plan=initial.with_(seed=1), update_window=1200, horizon=100)
    warm = rolling_forecast(values, config, warm_plan, warm_start=True, scale="none", seasonal_periods=())
    cold = rolling_forecast(values, config, cold_plan, warm_start=False, scale="none", seasonal_periods=())
    t_ratio = sum(warm.fit_seconds) / sum(cold.fit_seconds)
    m_ratio = warm.metrics["mae"] / cold.metrics["mae"]
    ok = t_ratio < 0.5 and m_ratio <= 1.05
    record_criterion(10, ok, f"fit time warm/cold {t_ratio:.2f}, MAE warm {warm.metrics['mae']:.4f} / "
                             f"cold {cold.metrics['mae']:.4f} = {m_ratio:.3f}")
    assert ok
