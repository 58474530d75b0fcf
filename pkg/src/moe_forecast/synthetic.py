"""Seeded synthetic series used by the tests and the benchmark command."""

from __future__ import annotations

import numpy as np

from .numerics import make_rng


def regime_switch_ar1(n: int = 4000, block: int = 200, seed: int = 0, noise: float = 1.0,
                      regimes=((0.0, 0.5), (3.0, -0.9))) -> np.ndarray:
    """Two AR(1) regimes ``y_t = mu + phi (y_{t-1} - mu) + e_t`` alternating
    every ``block`` steps. ``regimes`` holds (mu, phi) pairs."""
    rng = make_rng(seed)
    eps = rng.normal(0.0, noise, size=n)
    y = np.empty(n)
    prev = regimes[0][0]
    for t in range(n):
        mu, phi = regimes[(t // block) % len(regimes)]
        prev = mu + phi * (prev - mu) + eps[t]
        y[t] = prev
    return y


def drifting_mean(n: int = 1200, seed: int = 0, drift: float = 0.02, phi: float = 0.5,
                  noise: float = 0.3) -> np.ndarray:
    """AR(1) noise around a linearly drifting level."""
    rng = make_rng(seed)
    eps = rng.normal(0.0, noise, size=n)
    level = 5.0 + drift * np.arange(n)
    y = np.empty(n)
    dev = 0.0
    for t in range(n):
        dev = phi * dev + eps[t]
        y[t] = level[t] + dev
    return y


def linear_task(n: int = 2000, num_lags: int = 4, seed: int = 0, noise: float = 0.01):
    """(X, y, beta) with y = X beta + small Gaussian noise."""
    rng = make_rng(seed)
    beta = rng.uniform(-1.0, 1.0, size=num_lags)
    X = rng.normal(size=(n, num_lags))
    y = X @ beta + noise * rng.normal(size=n)
    return X, y, beta
