"""Command-line entry point: ``moe-forecast {train,forecast,rolling,ablate,evaluate}``.

Settings come from an optional YAML file (``--config``) with command-line
flags taking precedence. Every run writes its fully resolved configuration
to ``<out>/config.yaml``; feeding that file back reproduces the run.
"""

from __future__ import annotations

import argparse
import copy
import csv
import hashlib
import json
import logging
import sys
from pathlib import Path

import numpy as np
import yaml

from . import plotting
from .data import TimeSeriesDataset, load_dataset, lookup_monash_config, make_scaler
from .evaluation import (
    evaluate_forecasts,
    format_table,
    pooled_regression_fit,
    pooled_regression_predict,
    recursive_forecast_many,
    seasonal_naive_forecast,
)
from .experiments import _scaled_supervised, fixed_scheme, gamma_ablation
from .model import ModelConfig, load_checkpoint, predict, save_checkpoint
from .numerics import derive_seed
from .online import OnlinePlan, rolling_forecast
from .training import TrainPlan

logger = logging.getLogger("moe_forecast")

COMMANDS = ("train", "forecast", "rolling", "ablate", "evaluate")

DEFAULTS: dict = {
    "dataset": None,
    "format": None,
    "series": None,
    "lags": None,
    "horizon": None,
    "scale": "mean-abs",
    "seed": 0,
    "out": "runs/latest",
    "seasonal_periods": None,
    "impute": False,
    "checkpoint": None,
    "forecasts": None,
    "model": {
        "num_mlp_experts": 3,
        "hidden_sizes": None,
        "hidden_activation": "relu",
        "gate_leaky_slope": 0.01,
        "gate_bias": True,
    },
    "train": {
        "learning_rate": 1e-3,
        "weight_decay": 0.0,
        "batch_size": 256,
        "epochs": 20,
        "loss_weights": {"gamma": 0.25, "lambda1": 1e-8, "lambda2": 1e-8, "l1_target": "output_layers"},
    },
    "online": {
        "initial_window": 3650,
        "update_window": 365,
        "update_learning_rate": 1e-3,
        "update_epochs": 20,
        "freeze_hidden_on_update": False,
    },
    "ablation": {"gammas": [0.25, 1.0], "seeds": [0, 1, 2, 3, 4]},
}

EXAMPLE_CONFIG = """\
# moe-forecast run configuration. Every key is optional; flags override.
dataset: data/saugeenday_dataset.tsf   # .tsf or .csv
format: tsf              # tsf | csv (default: from the file extension)
series: null             # series id for rolling/ablate (default: first series)
lags: 9                  # default: Monash table for known datasets
horizon: 30              # default: @horizon in the .tsf, else Monash table
scale: mean-abs          # mean-abs | none
seed: 0                  # root seed; every component derives its own
out: runs/saugeen
seasonal_periods: [1, 7] # MASE scalings; the first is reported as "mase"
model:
  num_mlp_experts: 3
  hidden_sizes: [20, 20, 20]   # one entry per MLP expert, or a single int
  hidden_activation: relu      # relu | tanh | leaky_relu
  gate_leaky_slope: 0.01
  gate_bias: true
train:                   # fixed-scheme fit and the first rolling window
  learning_rate: 0.001
  weight_decay: 0.0      # decoupled optimizer decay; the l2 term below is the loss penalty
  batch_size: 256
  epochs: 20
  loss_weights: {gamma: 0.25, lambda1: 1.0e-8, lambda2: 1.0e-8, l1_target: output_layers}
online:                  # rolling windows after the first
  initial_window: 3650
  update_window: 365
  update_learning_rate: 0.001
  update_epochs: 20
  freeze_hidden_on_update: false
ablation:
  gammas: [0.25, 1.0]
  seeds: [0, 1, 2, 3, 4]
"""


class CliError(Exception):
    pass


# ------------------------------------------------------------ config

def _merge(base: dict, override: dict) -> dict:
    out = copy.deepcopy(base)
    for key, value in override.items():
        if isinstance(value, dict) and isinstance(out.get(key), dict):
            out[key] = _merge(out[key], value)
        else:
            out[key] = value
    return out


def _parse_hidden(text: str) -> list[int]:
    return [int(tok) for tok in str(text).replace(" ", "").split(",") if tok]


def _flag_overrides(args: argparse.Namespace) -> dict:
    o: dict = {}
    for key in ("dataset", "format", "series", "lags", "horizon", "scale", "seed", "out", "checkpoint", "forecasts"):
        value = getattr(args, key, None)
        if value is not None:
            o[key] = value
    if getattr(args, "impute", False):
        o["impute"] = True
    if getattr(args, "seasonal_periods", None):
        o["seasonal_periods"] = _parse_hidden(args.seasonal_periods)
    model: dict = {}
    if args.experts is not None:
        model["num_mlp_experts"] = args.experts
    if args.hidden is not None:
        model["hidden_sizes"] = _parse_hidden(args.hidden)
    if args.activation is not None:
        model["hidden_activation"] = args.activation
    if model:
        o["model"] = model
    train: dict = {}
    if args.gamma is not None:
        train.setdefault("loss_weights", {})["gamma"] = args.gamma
    if args.epochs is not None:
        train["epochs"] = args.epochs
    if args.lr is not None:
        train["learning_rate"] = args.lr
    if args.batch_size is not None:
        train["batch_size"] = args.batch_size
    if train:
        o["train"] = train
    online: dict = {}
    if args.freeze_hidden:
        online["freeze_hidden_on_update"] = True
    if args.update_window is not None:
        online["update_window"] = args.update_window
    if args.update_lr is not None:
        online["update_learning_rate"] = args.update_lr
    if args.update_epochs is not None:
        online["update_epochs"] = args.update_epochs
    if args.initial_window is not None:
        online["initial_window"] = args.initial_window
    if online:
        o["online"] = online
    if getattr(args, "gammas", None):
        o.setdefault("ablation", {})["gammas"] = [float(g) for g in args.gammas.split(",")]
    if getattr(args, "seeds", None):
        o.setdefault("ablation", {})["seeds"] = [int(s) for s in args.seeds.split(",")]
    return o


def resolve_config(args: argparse.Namespace) -> dict:
    cfg = copy.deepcopy(DEFAULTS)
    if args.config:
        loaded = yaml.safe_load(Path(args.config).read_text()) or {}
        if not isinstance(loaded, dict):
            raise CliError(f"{args.config}: configuration must be a mapping")
        cfg = _merge(cfg, loaded)
    cfg = _merge(cfg, _flag_overrides(args))
    cfg["command"] = args.command
    return cfg


def config_hash(cfg: dict) -> str:
    canonical = {k: v for k, v in cfg.items() if k not in ("out", "command")}
    return hashlib.sha256(json.dumps(canonical, sort_keys=True).encode()).hexdigest()[:16]


def _resolve_dataset(cfg: dict) -> TimeSeriesDataset:
    if not cfg["dataset"]:
        raise CliError("no dataset given (use --dataset or the config file)")
    path = Path(cfg["dataset"])
    if not path.exists():
        raise CliError(f"dataset {path} not found")
    ds = load_dataset(path, cfg["format"], impute=cfg["impute"])
    known = lookup_monash_config(ds.name) or lookup_monash_config(path.stem)
    if cfg["lags"] is None:
        if known is None:
            raise CliError(f"no lag count known for {path.name}; pass --lags")
        cfg["lags"] = known["lags"]
    if cfg["horizon"] is None:
        cfg["horizon"] = ds.horizon or (known or {}).get("horizon")
        if cfg["horizon"] is None:
            raise CliError("no forecast horizon known; pass --horizon")
    if cfg["seasonal_periods"] is None:
        cfg["seasonal_periods"] = [1, ds.seasonal_period] if ds.seasonal_period > 1 else [1]
    return ds


def _model_config(cfg: dict) -> ModelConfig:
    mc = cfg["model"]
    K = int(mc["num_mlp_experts"])
    hidden = mc["hidden_sizes"]
    if hidden is None:
        hidden = [40] if K == 1 else [20] * K
    if isinstance(hidden, int):
        hidden = [hidden]
    if len(hidden) == 1 and K != 1:
        hidden = hidden * K
    if len(hidden) != K:
        raise CliError(f"{len(hidden)} hidden sizes given for {K} MLP experts")
    mc["hidden_sizes"] = list(hidden)
    return ModelConfig(
        input_dim=int(cfg["lags"]), hidden_sizes=tuple(hidden), hidden_activation=mc["hidden_activation"],
        gate_leaky_slope=float(mc["gate_leaky_slope"]), gate_bias=bool(mc["gate_bias"]),
    )


def _train_plan(cfg: dict, label: str) -> TrainPlan:
    t = cfg["train"]
    return TrainPlan(
        learning_rate=float(t["learning_rate"]), weight_decay=float(t["weight_decay"]),
        batch_size=int(t["batch_size"]), epochs=int(t["epochs"]),
        loss_weights=dict(t["loss_weights"]), seed=derive_seed(int(cfg["seed"]), label),
    )


def _online_plan(cfg: dict) -> OnlinePlan:
    o = cfg["online"]
    initial = _train_plan(cfg, "rolling-initial")
    update = initial.with_(learning_rate=float(o["update_learning_rate"]), epochs=int(o["update_epochs"]),
                           seed=derive_seed(int(cfg["seed"]), "rolling-update"))
    return OnlinePlan(
        initial_plan=initial, initial_window=int(o["initial_window"]), update_plan=update,
        update_window=int(o["update_window"]), horizon=int(cfg["horizon"]),
        freeze_hidden_on_update=bool(o["freeze_hidden_on_update"]),
    )


def _pick_series(ds: TimeSeriesDataset, series_id) -> np.ndarray:
    if series_id is None:
        return ds.series[0].values
    for s in ds.series:
        if s.id == str(series_id):
            return s.values
    raise CliError(f"series {series_id!r} not in dataset")


# ----------------------------------------------------------- outputs

def _write_config(out: Path, cfg: dict) -> None:
    (out / "config.yaml").write_text(yaml.safe_dump(cfg, sort_keys=True))


def _report_config(cfg: dict) -> dict:
    """Resolved settings as embedded in reports; the output location is left
    out so identical runs written to different places match byte for byte."""
    return {k: v for k, v in cfg.items() if k != "out"}


def _write_json(path: Path, payload) -> None:
    path.write_text(json.dumps(payload, indent=2, sort_keys=True))


def _write_forecast_table(path: Path, ids, actuals, columns: dict[str, list[np.ndarray]]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["series_id", "step", "actual"] + list(columns))
        for i, sid in enumerate(ids):
            for h in range(len(next(iter(columns.values()))[i])):
                actual = repr(float(actuals[i][h])) if actuals is not None else ""
                w.writerow([sid, h + 1, actual] + [repr(float(col[i][h])) for col in columns.values()])


# ---------------------------------------------------------- commands

def cmd_train(cfg: dict) -> dict:
    ds = _resolve_dataset(cfg)
    config = _model_config(cfg)
    plan = _train_plan(cfg, "train")
    out = Path(cfg["out"])
    out.mkdir(parents=True, exist_ok=True)
    result = fixed_scheme(ds, config, plan, int(cfg["horizon"]), scale=cfg["scale"],
                          seasonal_periods=cfg["seasonal_periods"])
    provenance = {"seed": cfg["seed"], "config_hash": config_hash(cfg)}
    save_checkpoint(result.params, out / "checkpoint.json",
                    extra={"scale": cfg["scale"], "lags": cfg["lags"], **provenance})
    result.trace.to_jsonl(out / "trace.jsonl")
    summaries = {"adaptive_moe": result.summary, **result.baselines}
    _write_json(out / "metrics.json", {**provenance, "config": _report_config(cfg),
                                       "models": {k: v.to_dict() for k, v in summaries.items()}})
    _write_forecast_table(out / "forecasts.csv", result.series_ids, result.actuals,
                          {"adaptive_moe": result.forecasts, **result.baseline_forecasts})
    table = format_table(summaries)
    (out / "summary.txt").write_text(table + "\n")
    _write_json(out / "timings.json", {"seconds": result.seconds, "train_seconds": result.trace.seconds})
    plotting.forecast_figure(
        out / "forecast.png", result.actuals[0],
        {"adaptive MoE": result.forecasts[0], "pooled regression": result.baseline_forecasts["pooled_regression"][0]},
        history=result.insample[0], title=f"{ds.name}: {result.series_ids[0]}",
    )
    plotting.loss_figure(out / "loss.png", result.trace.records())
    _write_config(out, cfg)
    print(table)
    return {"summary": result.summary, "result": result}


def cmd_forecast(cfg: dict) -> dict:
    if not cfg["checkpoint"]:
        raise CliError("forecast needs --checkpoint")
    params = load_checkpoint(cfg["checkpoint"])
    extra = json.loads(Path(cfg["checkpoint"]).read_text()).get("extra", {})
    if cfg["lags"] is None:
        cfg["lags"] = params.config.input_dim
    cfg["scale"] = extra.get("scale", cfg["scale"])
    ds = _resolve_dataset(cfg)
    config = params.config
    if int(cfg["lags"]) != config.input_dim:
        raise CliError(f"checkpoint expects {config.input_dim} lags, got {cfg['lags']}")
    H = int(cfg["horizon"])
    histories = [s.values for s in ds.series if s.values.size >= config.input_dim]
    ids = [s.id for s in ds.series if s.values.size >= config.input_dim]
    scaler = make_scaler(cfg["scale"], histories)
    scaled = [scaler.transform(i, h) for i, h in enumerate(histories)]
    fc = recursive_forecast_many(lambda X: predict(params, config, X), scaled, config.input_dim, H)
    forecasts = [scaler.inverse(i, f) for i, f in enumerate(fc)]
    out = Path(cfg["out"])
    out.mkdir(parents=True, exist_ok=True)
    _write_forecast_table(out / "forecasts.csv", ids, None, {"adaptive_moe": forecasts})
    plotting.forecast_figure(out / "forecast.png", np.full(H, np.nan), {"adaptive MoE": forecasts[0]},
                             history=histories[0], title=f"{ds.name}: {ids[0]}")
    _write_config(out, cfg)
    print(f"wrote {len(ids)} x {H} forecasts to {out / 'forecasts.csv'}")
    return {"forecasts": forecasts}


def cmd_rolling(cfg: dict) -> dict:
    ds = _resolve_dataset(cfg)
    config = _model_config(cfg)
    plan = _online_plan(cfg)
    values = _pick_series(ds, cfg["series"])
    out = Path(cfg["out"])
    report = rolling_forecast(values, config, plan, scale=cfg["scale"], seasonal_periods=cfg["seasonal_periods"])
    report.meta.update({"seed": cfg["seed"], "config_hash": config_hash(cfg), "run_config": _report_config(cfg)})
    report.write(out)
    plotting.forecast_figure(out / "rolling.png", report.actuals, {"rolling MoE": report.forecasts},
                             history=values[: values.size - plan.horizon], title="rolling one-step forecasts")
    _write_config(out, cfg)
    lines = [f"{k:>8}: {v:.4f}" for k, v in report.metrics.items()]
    lines.append(f"{'runtime':>8}: {report.total_seconds:.2f} s")
    (out / "summary.txt").write_text("\n".join(lines[:-1]) + "\n")
    print("\n".join(lines))
    return {"report": report}


def cmd_ablate(cfg: dict) -> dict:
    ds = _resolve_dataset(cfg)
    config = _model_config(cfg)
    plan = _online_plan(cfg)
    values = _pick_series(ds, cfg["series"])
    gammas = [float(g) for g in cfg["ablation"]["gammas"]]
    if any(not 0.0 <= g <= 1.0 for g in gammas):
        raise CliError(f"gamma values must lie in [0, 1], got {gammas}")
    seeds = [int(s) for s in cfg["ablation"]["seeds"]]
    sub_seeds = [derive_seed(int(cfg["seed"]), "ablation", s) for s in seeds]
    rows = gamma_ablation(values, config, plan, gammas, sub_seeds, scale=cfg["scale"],
                          seasonal_periods=cfg["seasonal_periods"])
    out = Path(cfg["out"])
    out.mkdir(parents=True, exist_ok=True)
    chash = config_hash(cfg)
    metric_keys = [k for k in rows[0] if k not in ("gamma", "seed", "total_seconds", "report")]
    with open(out / "ablation.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["gamma", "seed", *metric_keys, "config_hash"])
        for r in rows:
            w.writerow([r["gamma"], r["seed"], *[repr(r[k]) for k in metric_keys], chash])
    medians = {}
    for g in dict.fromkeys(gammas):
        sel = [r for r in rows if r["gamma"] == g]
        medians[repr(g)] = {k: float(np.median([r[k] for r in sel])) for k in metric_keys}
    _write_json(out / "ablation.json", {
        "config": _report_config(cfg), "config_hash": chash, "root_seed": cfg["seed"],
        "runs": [{k: v for k, v in r.items() if k not in ("report", "total_seconds")} for r in rows],
        "median": medians,
    })
    _write_json(out / "timings.json", [{"gamma": r["gamma"], "seed": r["seed"], "seconds": r["total_seconds"]} for r in rows])
    plotting.ablation_figure(out / "ablation.png", rows)
    _write_config(out, cfg)
    lines = [f"gamma={g}: " + ", ".join(f"{k}={v:.4f}" for k, v in med.items()) for g, med in medians.items()]
    (out / "summary.txt").write_text("\n".join(lines) + "\n")
    print("\n".join(lines))
    return {"rows": rows, "median": medians}


def _read_forecast_file(path) -> dict[str, list[float]]:
    out: dict[str, list[tuple[int, float]]] = {}
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        col = "forecast" if "forecast" in reader.fieldnames else "adaptive_moe"
        for row in reader:
            out.setdefault(row["series_id"], []).append((int(row["step"]), float(row[col])))
    return {k: [v for _, v in sorted(vals)] for k, vals in out.items()}


def cmd_evaluate(cfg: dict) -> dict:
    """Score a forecast file (optional) and the two baselines on the last
    ``horizon`` points of every series."""
    ds = _resolve_dataset(cfg)
    H, m = int(cfg["horizon"]), int(cfg["lags"])
    periods = cfg["seasonal_periods"]
    raw, scaler, split = _scaled_supervised(ds, m, H, cfg["scale"])
    ids = [ds.series[i].id for i in raw.kept]
    coef = pooled_regression_fit(split.train)
    pr = recursive_forecast_many(lambda X: pooled_regression_predict(coef, X), split.insample, m, H)
    columns = {
        "pooled_regression": [scaler.inverse(j, f) for j, f in enumerate(pr)],
        "seasonal_naive": [seasonal_naive_forecast(ins, ds.seasonal_period, H) for ins in raw.insample],
    }
    if cfg["forecasts"]:
        given = _read_forecast_file(cfg["forecasts"])
        missing = [sid for sid in ids if sid not in given]
        if missing:
            raise CliError(f"forecast file lacks series {missing[:5]}")
        columns = {"forecasts": [np.asarray(given[sid][:H]) for sid in ids], **columns}
    summaries = {name: evaluate_forecasts(raw.actuals, fc, raw.insample, periods, ids) for name, fc in columns.items()}
    out = Path(cfg["out"])
    out.mkdir(parents=True, exist_ok=True)
    _write_json(out / "metrics.json", {"config": _report_config(cfg), "seed": cfg["seed"], "config_hash": config_hash(cfg),
                                       "models": {k: v.to_dict() for k, v in summaries.items()}})
    _write_forecast_table(out / "forecasts.csv", ids, raw.actuals, columns)
    table = format_table(summaries)
    (out / "summary.txt").write_text(table + "\n")
    _write_config(out, cfg)
    print(table)
    return {"summaries": summaries}


HANDLERS = {"train": cmd_train, "forecast": cmd_forecast, "rolling": cmd_rolling,
            "ablate": cmd_ablate, "evaluate": cmd_evaluate}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="moe-forecast", description=__doc__.splitlines()[0])
    parser.add_argument("--example-config", action="store_true", help="print an annotated config file and exit")
    sub = parser.add_subparsers(dest="command")
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", help="YAML configuration file")
        p.add_argument("--dataset")
        p.add_argument("--format", choices=["tsf", "csv"])
        p.add_argument("--series", help="series id for single-series commands")
        p.add_argument("--lags", type=int)
        p.add_argument("--horizon", type=int)
        p.add_argument("--experts", type=int, help="number of MLP experts K")
        p.add_argument("--hidden", help="hidden sizes, e.g. 20,20,20 or 40")
        p.add_argument("--activation", choices=["relu", "tanh", "leaky_relu"])
        p.add_argument("--gamma", type=float)
        p.add_argument("--epochs", type=int)
        p.add_argument("--lr", type=float)
        p.add_argument("--batch-size", type=int)
        p.add_argument("--seed", type=int)
        p.add_argument("--out")
        p.add_argument("--scale", choices=["mean-abs", "none"])
        p.add_argument("--seasonal-periods", help="comma-separated MASE periods, e.g. 1,7")
        p.add_argument("--impute", action="store_true", help="interpolate '?' values in .tsf files")
        p.add_argument("--freeze-hidden", action="store_true")
        p.add_argument("--initial-window", type=int)
        p.add_argument("--update-window", type=int)
        p.add_argument("--update-lr", type=float)
        p.add_argument("--update-epochs", type=int)
        p.add_argument("--checkpoint")
        p.add_argument("--forecasts", help="forecast CSV to score (evaluate)")
        p.add_argument("--gammas", help="comma-separated gamma values (ablate)")
        p.add_argument("--seeds", help="comma-separated seeds (ablate)")
        p.add_argument("-v", "--verbose", action="store_true")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.example_config:
        print(EXAMPLE_CONFIG, end="")
        return 0
    if not args.command:
        parser.print_help()
        return 2
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = resolve_config(args)
        HANDLERS[args.command](cfg)
    except (CliError, ValueError, FloatingPointError, OSError, np.linalg.LinAlgError) as exc:
        print(f"moe-forecast {args.command}: error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
