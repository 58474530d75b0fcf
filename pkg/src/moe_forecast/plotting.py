"""Report figures. Everything renders off-screen to files."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

STYLE = {
    "figure.figsize": (7.0, 3.6),
    "figure.dpi": 110,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "axes.grid": True,
    "grid.alpha": 0.3,
    "font.size": 9,
    "legend.fontsize": 8,
    "legend.frameon": False,
    "lines.linewidth": 1.2,
}


def _save(fig, path) -> str:
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)
    return str(path)


def forecast_figure(path, actuals, forecasts: dict[str, np.ndarray], history=None, history_len: int = 120,
                    title: str = ""):
    """Actual test values against one or more forecast paths, optionally
    preceded by the tail of the in-sample history."""
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        offset = 0
        if history is not None and len(history):
            tail = np.asarray(history)[-history_len:]
            ax.plot(np.arange(-tail.size, 0), tail, color="0.55", label="history")
        steps = np.arange(offset, offset + len(actuals))
        ax.plot(steps, actuals, color="k", label="actual")
        for name, values in forecasts.items():
            ax.plot(steps, values, label=name)
        ax.axvline(-0.5, color="0.7", lw=0.8, ls="--")
        ax.set_xlabel("step relative to forecast origin")
        ax.set_ylabel("value")
        if title:
            ax.set_title(title)
        ax.legend(loc="best")
        return _save(fig, path)


def loss_figure(path, records: list[dict], title: str = "training loss"):
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        epochs = [r["epoch"] + 1 for r in records]
        for key, style in (("total", "-"), ("base", "--"), ("aux", ":")):
            ax.plot(epochs, [r[key] for r in records], style, label=key)
        if any("validation_mae" in r for r in records):
            ax.plot(epochs, [r.get("validation_mae", np.nan) for r in records], "-.", label="validation MAE")
        ax.set_xlabel("epoch")
        ax.set_ylabel("loss (scaled units)")
        ax.set_title(title)
        ax.legend(loc="best")
        return _save(fig, path)


def ablation_figure(path, rows: list[dict], metric: str = "mae"):
    """Per-gamma spread across seeds with the median marked."""
    gammas = sorted({r["gamma"] for r in rows})
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        for i, g in enumerate(gammas):
            vals = [r[metric] for r in rows if r["gamma"] == g]
            ax.scatter(np.full(len(vals), i), vals, color="C0", alpha=0.6, s=14)
            ax.hlines(np.median(vals), i - 0.25, i + 0.25, color="C3")
        ax.set_xticks(range(len(gammas)), [f"{g:g}" for g in gammas])
        ax.set_xlabel("gamma")
        ax.set_ylabel(metric.upper())
        return _save(fig, path)
