from datetime import date

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qtrader.market_data import (
    EmptySeries,
    MissingColumn,
    NonMonotonicDates,
    PriceSeries,
    SplitSpec,
    TooShort,
    load_csv,
    split_series,
    write_csv,
)


def write(tmp_path, text, name="px.csv"):
    path = tmp_path / name
    path.write_text(text)
    return path


def test_load_two_rows(tmp_path):
    path = write(tmp_path, "Date,Open,Close,Volume\n2020-01-01,99,100.0,5\n2020-01-02,100,101.5,7\n")
    series = load_csv(path)
    assert len(series) == 2
    assert series.closes.tolist() == [100.0, 101.5]
    assert series.dates == (date(2020, 1, 1), date(2020, 1, 2))
    assert series.symbol == "px"


def test_na_row_skipped_and_counted(tmp_path):
    lines = ["Date,Close"] + [f"2020-01-{d:02d},{100 + d}" for d in range(1, 11)]
    lines.insert(5, "2020-01-20,NA")
    series = load_csv(write(tmp_path, "\n".join(lines) + "\n"))
    assert len(series) == 10
    assert series.skipped_rows == 1


def test_nonpositive_and_bad_dates_skipped(tmp_path):
    text = "Date,Close\n2020-01-01,10\n2020-01-02,0\n2020-01-03,-4\nnot-a-date,5\n2020-01-05,\n2020-01-06,11\n"
    series = load_csv(write(tmp_path, text))
    assert series.closes.tolist() == [10.0, 11.0]
    assert series.skipped_rows == 4


def test_header_only_is_empty(tmp_path):
    with pytest.raises(EmptySeries):
        load_csv(write(tmp_path, "Date,Close\n"))


def test_missing_column(tmp_path):
    with pytest.raises(MissingColumn):
        load_csv(write(tmp_path, "Date,Adj Close\n2020-01-01,3\n"))


def test_custom_columns_and_date_format(tmp_path):
    path = write(tmp_path, "day,last\n02/01/2020,5\n01/01/2020,4\n")
    series = load_csv(path, close_column="last", date_column="day", date_format="%d/%m/%Y")
    assert series.closes.tolist() == [4.0, 5.0]  # sorted by date


def test_duplicate_dates_rejected(tmp_path):
    with pytest.raises(NonMonotonicDates):
        load_csv(write(tmp_path, "Date,Close\n2020-01-01,3\n2020-01-01,4\n"))


def test_series_invariants():
    with pytest.raises(ValueError):
        PriceSeries("X", [date(2020, 1, 1)], [1.0, 2.0])
    with pytest.raises(ValueError):
        PriceSeries.from_closes([1.0, np.inf])
    with pytest.raises(NonMonotonicDates):
        PriceSeries("X", [date(2020, 1, 2), date(2020, 1, 1)], [1.0, 2.0])


@pytest.mark.parametrize("n, train_len, test_len", [(1000, 500, 500), (1001, 500, 501)])
def test_split_lengths(n, train_len, test_len):
    series = PriceSeries.from_closes(np.linspace(10, 20, n))
    train, test = split_series(series, SplitSpec(0.5), window_size=90)
    assert (len(train), len(test)) == (train_len, test_len)


def test_split_too_short():
    with pytest.raises(TooShort):
        split_series(PriceSeries.from_closes(np.arange(1.0, 11.0)), SplitSpec(), window_size=90)


def test_split_fraction_bounds():
    assert SplitSpec().train_fraction == 0.5
    for bad in (0.0, 1.0, -0.2):
        with pytest.raises(ValueError):
            SplitSpec(bad)


closes_strategy = st.lists(
    st.floats(min_value=0.01, max_value=1e6, allow_nan=False, allow_infinity=False), min_size=1, max_size=60
)


@settings(max_examples=50, deadline=None)
@given(closes_strategy)
def test_csv_round_trip(tmp_path_factory, closes):
    series = PriceSeries.from_closes(closes, symbol="rt")
    path = write_csv(series, tmp_path_factory.mktemp("rt") / "rt.csv")
    again = load_csv(path)
    assert again.dates == series.dates
    assert np.array_equal(again.closes, series.closes)


@settings(max_examples=50, deadline=None)
@given(n=st.integers(min_value=22, max_value=300), frac=st.floats(min_value=0.05, max_value=0.95))
def test_split_conservation(n, frac):
    series = PriceSeries.from_closes(np.arange(1.0, n + 1.0))
    train, test = split_series(series, SplitSpec(frac), window_size=10)
    assert train.dates + test.dates == series.dates
    assert np.array_equal(np.concatenate([train.closes, test.closes]), series.closes)
    assert not set(train.dates) & set(test.dates)
    if len(train) and len(test):
        assert max(train.dates) < min(test.dates)
