"""Series ingestion (Monash ``.tsf`` and CSV), lag embedding and splits."""

from __future__ import annotations

import csv
import enum
import logging
import math
import re
from dataclasses import dataclass, field
from datetime import datetime
from pathlib import Path

import numpy as np

logger = logging.getLogger(__name__)

TSF_TIMESTAMP = "%Y-%m-%d %H-%M-%S"


class Frequency(str, enum.Enum):
    HOURLY = "hourly"
    DAILY = "daily"
    WEEKLY = "weekly"
    MONTHLY = "monthly"
    OTHER = "other"


DEFAULT_SEASONALITY = {
    Frequency.HOURLY: 24,
    Frequency.DAILY: 7,
    Frequency.WEEKLY: 52,
    Frequency.MONTHLY: 12,
    Frequency.OTHER: 1,
}

# Monash frequency strings that are valid but outside the four named ones.
_OTHER_TSF_FREQUENCIES = {
    "yearly", "quarterly", "minutely", "10_minutes", "half_hourly",
    "4_seconds", "seconds", "secondly", "30_minutes", "15_minutes", "5_minutes",
}

# Lag count and forecast horizon per dataset, as configured for the global
# models in the Monash forecasting archive experiments (lag ~ 1.25 x season).
MONASH_CONFIG = {
    "saugeen": {"lags": 9, "horizon": 30, "frequency": Frequency.DAILY},
    "electricity_weekly": {"lags": 65, "horizon": 8, "frequency": Frequency.WEEKLY},
    "m4_hourly": {"lags": 210, "horizon": 48, "frequency": Frequency.HOURLY},
    "car_parts": {"lags": 15, "horizon": 12, "frequency": Frequency.MONTHLY},
    "dominick": {"lags": 10, "horizon": 8, "frequency": Frequency.WEEKLY},
    "tourism_monthly": {"lags": 15, "horizon": 24, "frequency": Frequency.MONTHLY},
}


def lookup_monash_config(name: str) -> dict | None:
    """Match a relation name or file stem such as ``saugeenday_dataset``."""
    key = re.sub(r"[^a-z0-9]+", "_", name.lower())
    aliases = {
        "saugeen": "saugeen", "electricity_weekly": "electricity_weekly",
        "m4_hourly": "m4_hourly", "car_parts": "car_parts", "carparts": "car_parts",
        "dominick": "dominick", "tourism_monthly": "tourism_monthly",
    }
    for alias, target in aliases.items():
        if alias in key:
            return MONASH_CONFIG[target]
    return None


class DataFormatError(ValueError):
    def __init__(self, message: str, line: int | None = None, path=None):
        self.line = line
        self.path = path
        where = ""
        if path is not None:
            where += f"{path}"
        if line is not None:
            where += f":{line}"
        super().__init__(f"{where}: {message}" if where else message)


@dataclass
class Series:
    id: str
    values: np.ndarray
    start: datetime | None = None

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)


@dataclass
class TimeSeriesDataset:
    series: list[Series]
    frequency: Frequency = Frequency.OTHER
    seasonal_period: int | None = None
    name: str = ""
    horizon: int | None = None

    def __post_init__(self):
        self.frequency = Frequency(self.frequency)
        if self.seasonal_period is None:
            self.seasonal_period = DEFAULT_SEASONALITY[self.frequency]
        if self.seasonal_period < 1:
            raise ValueError("seasonal period must be >= 1")
        for s in self.series:
            if s.values.size == 0:
                raise ValueError(f"series {s.id!r} is empty")

    def __len__(self):
        return len(self.series)

    @classmethod
    def from_arrays(cls, arrays, frequency=Frequency.OTHER, seasonal_period=None, name="") -> "TimeSeriesDataset":
        series = [Series(f"T{i + 1}", np.asarray(a, dtype=float)) for i, a in enumerate(arrays)]
        return cls(series, frequency, seasonal_period, name)


# --------------------------------------------------------------------- .tsf

def _parse_frequency(raw: str, line: int, path) -> Frequency:
    value = raw.strip().lower()
    try:
        return Frequency(value)
    except ValueError:
        pass
    if value in _OTHER_TSF_FREQUENCIES:
        return Frequency.OTHER
    raise DataFormatError(f"unknown frequency {raw!r}", line, path)


def _impute(values: np.ndarray) -> np.ndarray:
    missing = np.isnan(values)
    if missing.all():
        raise ValueError("cannot impute a series with no observed values")
    idx = np.arange(values.size)
    out = values.copy()
    out[missing] = np.interp(idx[missing], idx[~missing], values[~missing])
    return out


def parse_tsf(path, impute: bool = False) -> TimeSeriesDataset:
    """Read a Monash ``.tsf`` file.

    Missing values (``?``) raise unless ``impute`` is set, in which case they
    are filled by linear interpolation (constant at the ends).
    """
    path = Path(path)
    attributes: list[tuple[str, str]] = []
    frequency = Frequency.OTHER
    relation = path.stem
    horizon = None
    equal_length = False
    in_data = False
    series: list[Series] = []

    with open(path, encoding="utf-8", errors="replace") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            if not in_data:
                if not line.startswith("@"):
                    raise DataFormatError("expected a header directive", lineno, path)
                parts = line.split(None, 2)
                tag = parts[0].lower()
                if tag == "@data":
                    if not attributes:
                        raise DataFormatError("@data before any @attribute", lineno, path)
                    in_data = True
                    continue
                if len(parts) < 2:
                    raise DataFormatError(f"directive {parts[0]} has no value", lineno, path)
                if tag == "@attribute":
                    if len(parts) != 3:
                        raise DataFormatError("@attribute needs a name and a type", lineno, path)
                    kind = parts[2].lower()
                    if kind not in ("string", "numeric", "date"):
                        raise DataFormatError(f"unsupported attribute type {parts[2]!r}", lineno, path)
                    attributes.append((parts[1], kind))
                elif tag == "@frequency":
                    frequency = _parse_frequency(parts[1], lineno, path)
                elif tag == "@horizon":
                    try:
                        horizon = int(parts[1])
                    except ValueError:
                        raise DataFormatError(f"bad horizon {parts[1]!r}", lineno, path) from None
                elif tag == "@relation":
                    relation = parts[1]
                elif tag == "@equallength":
                    equal_length = parts[1].lower() == "true"
                elif tag == "@missing":
                    pass
                else:
                    raise DataFormatError(f"unknown directive {parts[0]}", lineno, path)
                continue

            fields = line.split(":")
            if len(fields) != len(attributes) + 1:
                raise DataFormatError(
                    f"expected {len(attributes)} attribute fields and a value list, got {len(fields)} fields",
                    lineno, path,
                )
            sid = f"T{len(series) + 1}"
            start = None
            for (name, kind), value in zip(attributes, fields[:-1]):
                if kind == "date":
                    try:
                        start = datetime.strptime(value.strip(), TSF_TIMESTAMP)
                    except ValueError:
                        raise DataFormatError(f"bad timestamp {value!r}", lineno, path) from None
                elif name == "series_name":
                    sid = value.strip()
            tokens = fields[-1].split(",")
            if not tokens or tokens == [""]:
                raise DataFormatError(f"series {sid!r} has no values", lineno, path)
            values = np.empty(len(tokens))
            for i, tok in enumerate(tokens):
                tok = tok.strip()
                if tok == "?":
                    values[i] = np.nan
                    continue
                try:
                    values[i] = float(tok)
                except ValueError:
                    raise DataFormatError(f"series {sid!r}: bad value {tok!r}", lineno, path) from None
                if not math.isfinite(values[i]):
                    raise DataFormatError(f"series {sid!r}: non-finite value {tok!r}", lineno, path)
            if np.isnan(values).any():
                if not impute:
                    raise DataFormatError(f"series {sid!r} has missing values and imputation is off", lineno, path)
                values = _impute(values)
            if equal_length and series and values.size != series[0].values.size:
                raise DataFormatError(
                    f"series {sid!r} has {values.size} values but @equallength is true "
                    f"and the first series has {series[0].values.size}", lineno, path,
                )
            series.append(Series(sid, values, start))

    if not in_data:
        raise DataFormatError("no @data section", None, path)
    if not series:
        raise DataFormatError("no series after @data", None, path)
    return TimeSeriesDataset(series, frequency, name=relation, horizon=horizon)


def write_tsf(dataset: TimeSeriesDataset, path) -> None:
    has_start = all(s.start is not None for s in dataset.series)
    lengths = {s.values.size for s in dataset.series}
    lines = [f"@relation {dataset.name or 'dataset'}", "@attribute series_name string"]
    if has_start:
        lines.append("@attribute start_timestamp date")
    lines.append(f"@frequency {dataset.frequency.value}")
    if dataset.horizon is not None:
        lines.append(f"@horizon {dataset.horizon}")
    lines.append("@missing false")
    lines.append(f"@equallength {'true' if len(lengths) == 1 else 'false'}")
    lines.append("@data")
    for s in dataset.series:
        head = [s.id]
        if has_start:
            head.append(s.start.strftime(TSF_TIMESTAMP))
        lines.append(":".join(head + [",".join(repr(float(v)) for v in s.values)]))
    Path(path).write_text("\n".join(lines) + "\n")


# ---------------------------------------------------------------------- CSV

def read_csv(path, frequency: Frequency | str = Frequency.OTHER, seasonal_period: int | None = None) -> TimeSeriesDataset:
    """Read either layout:

    * wide - a header of series ids, one column per series; shorter series
      leave trailing cells empty;
    * long - columns ``series_id`` and ``value`` (plus optional extras),
      rows in time order within each series.
    """
    path = Path(path)
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise DataFormatError("empty CSV file", None, path)
    header = [h.strip() for h in rows[0]]

    def number(tok: str, lineno: int) -> float:
        try:
            v = float(tok)
        except ValueError:
            raise DataFormatError(f"bad value {tok!r}", lineno, path) from None
        if not math.isfinite(v):
            raise DataFormatError(f"non-finite value {tok!r}", lineno, path)
        return v

    series: dict[str, list[float]] = {}
    if "series_id" in header and "value" in header:
        sid_col, val_col = header.index("series_id"), header.index("value")
        for lineno, row in enumerate(rows[1:], start=2):
            if not any(c.strip() for c in row):
                continue
            if len(row) <= max(sid_col, val_col):
                raise DataFormatError("short row", lineno, path)
            series.setdefault(row[sid_col].strip(), []).append(number(row[val_col].strip(), lineno))
    else:
        columns: list[list[float]] = [[] for _ in header]
        ended = [False] * len(header)
        for lineno, row in enumerate(rows[1:], start=2):
            if len(row) > len(header):
                raise DataFormatError(f"row has {len(row)} cells, header has {len(header)}", lineno, path)
            for j in range(len(header)):
                tok = row[j].strip() if j < len(row) else ""
                if tok == "":
                    ended[j] = True
                    continue
                if ended[j]:
                    raise DataFormatError(f"gap inside series {header[j]!r}", lineno, path)
                columns[j].append(number(tok, lineno))
        series = dict(zip(header, columns))
    return TimeSeriesDataset(
        [Series(sid, np.array(v)) for sid, v in series.items()],
        Frequency(frequency), seasonal_period, name=path.stem,
    )


def load_dataset(path, fmt: str | None = None, impute: bool = False, **kwargs) -> TimeSeriesDataset:
    path = Path(path)
    fmt = fmt or path.suffix.lstrip(".").lower()
    if fmt == "tsf":
        ds = parse_tsf(path, impute=impute)
        if kwargs.get("seasonal_period"):
            ds.seasonal_period = int(kwargs["seasonal_period"])
        return ds
    if fmt == "csv":
        return read_csv(path, **kwargs)
    raise ValueError(f"unknown dataset format {fmt!r}")


# ---------------------------------------------------------- lag embedding

@dataclass
class SupervisedSet:
    X: np.ndarray
    y: np.ndarray
    series_index: np.ndarray
    time_index: np.ndarray
    chronological: bool = True

    def __len__(self):
        return self.y.size

    def subset(self, mask) -> "SupervisedSet":
        return SupervisedSet(self.X[mask], self.y[mask], self.series_index[mask], self.time_index[mask], self.chronological)


@dataclass
class SupervisedSplit:
    train: SupervisedSet
    test: SupervisedSet
    insample: list[np.ndarray] = field(default_factory=list)
    actuals: list[np.ndarray] = field(default_factory=list)
    kept: list[int] = field(default_factory=list)


def lag_matrix(values: np.ndarray, num_lags: int) -> tuple[np.ndarray, np.ndarray]:
    """Rows of ``num_lags`` consecutive values (oldest first) and the value
    that follows each row."""
    values = np.asarray(values, dtype=float)
    n = values.size - num_lags
    if n <= 0:
        return np.empty((0, num_lags)), np.empty(0)
    X = np.lib.stride_tricks.sliding_window_view(values, num_lags)[:n].copy()
    return X, values[num_lags:].copy()


def _empty_set(num_lags: int) -> SupervisedSet:
    return SupervisedSet(np.empty((0, num_lags)), np.empty(0), np.empty(0, int), np.empty(0, int))


def _stack(parts: list[SupervisedSet], num_lags: int) -> SupervisedSet:
    if not parts:
        return _empty_set(num_lags)
    return SupervisedSet(
        np.vstack([p.X for p in parts]), np.concatenate([p.y for p in parts]),
        np.concatenate([p.series_index for p in parts]), np.concatenate([p.time_index for p in parts]),
    )


def make_supervised(dataset: TimeSeriesDataset | list, num_lags: int, horizon: int = 0,
                    strict: bool = False) -> SupervisedSplit:
    """Sliding-window embedding per series with the last ``horizon`` targets
    of every series held out as test rows (lags taken from actual values).

    Rows never mix series. Series with no room for a training row are
    skipped with a warning, or raise when ``strict``.
    """
    if num_lags < 1:
        raise ValueError("num_lags must be >= 1")
    if horizon < 0:
        raise ValueError("horizon must be >= 0")
    arrays = [s.values for s in dataset.series] if isinstance(dataset, TimeSeriesDataset) else [np.asarray(a, float) for a in dataset]
    train_parts, test_parts = [], []
    split = SupervisedSplit(_empty_set(num_lags), _empty_set(num_lags))
    for i, values in enumerate(arrays):
        if values.size - horizon <= num_lags:
            msg = f"series {i} has {values.size} values; needs more than {num_lags + horizon}"
            if strict:
                raise ValueError(msg)
            logger.warning("skipping %s", msg)
            continue
        X, y = lag_matrix(values, num_lags)
        t = np.arange(num_lags, values.size)
        n_train = y.size - horizon
        sidx = np.full(y.size, i)
        train_parts.append(SupervisedSet(X[:n_train], y[:n_train], sidx[:n_train], t[:n_train]))
        test_parts.append(SupervisedSet(X[n_train:], y[n_train:], sidx[n_train:], t[n_train:]))
        split.insample.append(values[: values.size - horizon])
        split.actuals.append(values[values.size - horizon:])
        split.kept.append(i)
    split.train = _stack(train_parts, num_lags)
    split.test = _stack(test_parts, num_lags)
    return split


def split_validation(values, horizon: int, num_lags: int = 0) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """(train, validation, test): the last ``horizon`` points are test, the
    ``horizon`` before them validation, the rest train."""
    values = np.asarray(values, dtype=float)
    if horizon < 1:
        raise ValueError("horizon must be >= 1")
    need = 2 * horizon + num_lags + 1
    if values.size < need:
        raise ValueError(f"series of length {values.size} too short for validation split; need {need}")
    t = values.size
    return values[: t - 2 * horizon], values[t - 2 * horizon: t - horizon], values[t - horizon:]


# --------------------------------------------------------------- scaling

@dataclass
class MeanAbsScaler:
    """Divides each series by the mean absolute value of its in-sample part."""

    scales: list[float] = field(default_factory=list)

    @classmethod
    def fit(cls, insample: list[np.ndarray]) -> "MeanAbsScaler":
        scales = []
        for values in insample:
            s = float(np.mean(np.abs(values)))
            scales.append(s if s > 0 else 1.0)
        return cls(scales)

    def transform(self, i: int, values):
        return np.asarray(values, dtype=float) / self.scales[i]

    def inverse(self, i: int, values):
        return np.asarray(values, dtype=float) * self.scales[i]


class IdentityScaler(MeanAbsScaler):
    @classmethod
    def fit(cls, insample):
        return cls([1.0] * len(insample))


def make_scaler(kind: str, insample: list[np.ndarray]) -> MeanAbsScaler:
    if kind == "mean-abs":
        return MeanAbsScaler.fit(insample)
    if kind == "none":
        return IdentityScaler.fit(insample)
    raise ValueError(f"unknown scaling {kind!r}")
