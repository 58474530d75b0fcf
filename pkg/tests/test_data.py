import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from moe_forecast.data import (
    DataFormatError,
    Frequency,
    MeanAbsScaler,
    Series,
    TimeSeriesDataset,
    lag_matrix,
    load_dataset,
    lookup_monash_config,
    make_scaler,
    make_supervised,
    parse_tsf,
    read_csv,
    split_validation,
    write_tsf,
)

MONASH_STYLE = """# Dataset Information
# a comment line that the reader skips
@relation river_flow
@attribute series_name string
@attribute start_timestamp date
@frequency daily
@horizon 30
@missing false
@equallength true
@data
T1:1915-01-01 00-00-00:110.0,97.0,97.0,94.5,87.0
"""


def write(tmp_path, text, name="d.tsf"):
    p = tmp_path / name
    p.write_text(text)
    return p


def test_tsf_monash_header(tmp_path):
    ds = parse_tsf(write(tmp_path, MONASH_STYLE))
    assert ds.name == "river_flow" and ds.horizon == 30
    assert ds.frequency is Frequency.DAILY and ds.seasonal_period == 7
    s = ds.series[0]
    assert s.id == "T1" and s.start.year == 1915
    assert s.values.tolist() == [110.0, 97.0, 97.0, 94.5, 87.0]


def test_tsf_round_trip(tmp_path):
    ds = TimeSeriesDataset(
        [Series("a", np.array([1.5, -2.25, 1e-17, 3.0])), Series("b", np.array([0.1, 0.2]))],
        Frequency.MONTHLY, name="toy", horizon=2,
    )
    write_tsf(ds, tmp_path / "toy.tsf")
    back = parse_tsf(tmp_path / "toy.tsf")
    assert [s.id for s in back.series] == ["a", "b"]
    for a, b in zip(ds.series, back.series):
        assert a.values.tobytes() == b.values.tobytes()
    assert back.frequency is Frequency.MONTHLY and back.horizon == 2 and back.name == "toy"


def test_tsf_missing_value_rejected_by_name(tmp_path):
    text = MONASH_STYLE.replace("97.0,97.0", "?,97.0")
    with pytest.raises(DataFormatError, match="T1"):
        parse_tsf(write(tmp_path, text))


def test_tsf_missing_value_imputed(tmp_path):
    text = MONASH_STYLE.replace("97.0,97.0", "?,97.0")
    ds = parse_tsf(write(tmp_path, text), impute=True)
    assert ds.series[0].values.tolist() == [110.0, 103.5, 97.0, 94.5, 87.0]


@pytest.mark.parametrize("text,line", [
    (MONASH_STYLE.replace("@frequency daily", "@frequency fortnightly"), 6),
    (MONASH_STYLE.replace("@attribute series_name string", "@attribute series_name"), 4),
    (MONASH_STYLE + "T2:1915-01-01 00-00-00:1.0,2.0\n", 12),
    (MONASH_STYLE + "T3:1.0,2.0\n", 12),
    (MONASH_STYLE.replace("94.5", "abc"), 11),
])
def test_tsf_errors_carry_line_numbers(tmp_path, text, line):
    with pytest.raises(DataFormatError) as info:
        parse_tsf(write(tmp_path, text))
    assert info.value.line == line


def test_tsf_without_data_section(tmp_path):
    with pytest.raises(DataFormatError):
        parse_tsf(write(tmp_path, "@relation x\n@attribute series_name string\n"))


def test_csv_wide_and_long(tmp_path):
    (tmp_path / "w.csv").write_text("a,b\n1,4\n2,5\n3,\n")
    wide = read_csv(tmp_path / "w.csv")
    assert [s.values.tolist() for s in wide.series] == [[1, 2, 3], [4, 5]]
    (tmp_path / "l.csv").write_text("series_id,value\nx,1\ny,7\nx,2\n")
    long = load_dataset(tmp_path / "l.csv")
    assert {s.id: s.values.tolist() for s in long.series} == {"x": [1, 2], "y": [7]}


@pytest.mark.parametrize("body", ["a\n1\nnan\n", "a\n1\ninf\n", "a,b\n1,2\n,3\n4,5\n"])
def test_csv_rejects_non_finite_and_gaps(tmp_path, body):
    (tmp_path / "bad.csv").write_text(body)
    with pytest.raises(DataFormatError):
        read_csv(tmp_path / "bad.csv")


def test_monash_lookup():
    assert lookup_monash_config("saugeenday_dataset")["lags"] == 9
    assert lookup_monash_config("Saugeen")["horizon"] == 30
    assert lookup_monash_config("something_else") is None


def test_supervised_hand_enumeration():
    split = make_supervised([np.array([1.0, 2, 3, 4, 5])], num_lags=2, horizon=1)
    assert split.train.X.tolist() == [[1, 2], [2, 3]]
    assert split.train.y.tolist() == [3, 4]
    assert split.test.X.tolist() == [[3, 4]] and split.test.y.tolist() == [5]


def test_supervised_minimum_length():
    split = make_supervised([np.array([1.0, 2.0])], num_lags=1)
    assert split.train.X.tolist() == [[1.0]] and split.train.y.tolist() == [2.0]


def test_supervised_skips_or_raises_on_short_series():
    arrays = [np.arange(3.0), np.arange(20.0)]
    split = make_supervised(arrays, num_lags=3, horizon=1)
    assert split.kept == [1]
    with pytest.raises(ValueError):
        make_supervised(arrays, num_lags=3, horizon=1, strict=True)


def test_supervised_saugeen_scale_arithmetic():
    split = make_supervised([np.arange(23741.0)], num_lags=9, horizon=30)
    assert len(split.train) == 23741 - 9 - 30 == 23702
    assert len(split.test) == 30


def test_no_cross_series_bleed():
    a, b = np.arange(10.0), 100 + np.arange(8.0)
    split = make_supervised([a, b], num_lags=3, horizon=2)
    for X, y, s in zip(split.train.X, split.train.y, split.train.series_index):
        src = (a, b)[s]
        t = int(np.where(src == y)[0][0])
        assert X.tolist() == src[t - 3:t].tolist()


@settings(max_examples=60, deadline=None)
@given(st.integers(1, 6), st.integers(0, 5), st.integers(0, 40))
def test_no_leakage_and_inverse(m, H, extra):
    values = np.arange(m + H + 1 + extra, dtype=float) * 1.5
    split = make_supervised([values], m, H)
    # latest value used by any training row comes before the first test target
    assert split.train.time_index.max() < values.size - H or H == 0
    if H:
        assert split.train.y.max() < split.test.y.min()
    X, y = lag_matrix(values, m)
    np.testing.assert_array_equal(np.concatenate([X[0], y]), values)


def test_split_validation_segments():
    train, val, test = split_validation(np.arange(100.0), 30)
    assert (train.size, val.size, test.size) == (40, 30, 30)
    assert train[-1] + 1 == val[0] and val[-1] + 1 == test[0]
    with pytest.raises(ValueError):
        split_validation(np.arange(70.0), 30, num_lags=10)


def test_split_validation_saugeen_indices():
    _, val, _ = split_validation(np.arange(1, 23742.0), 30, num_lags=9)
    assert (val[0], val[-1]) == (23682, 23711)


def test_scalers(rng):
    ins = [rng.normal(size=20), np.zeros(5)]
    sc = make_scaler("mean-abs", ins)
    assert sc.scales[0] == pytest.approx(np.mean(np.abs(ins[0])))
    assert sc.scales[1] == 1.0
    x = rng.normal(size=7)
    np.testing.assert_allclose(sc.inverse(0, sc.transform(0, x)), x, rtol=1e-15)
    assert make_scaler("none", ins).scales == [1.0, 1.0]
    assert isinstance(sc, MeanAbsScaler)
    with pytest.raises(ValueError):
        make_scaler("zscore", ins)
