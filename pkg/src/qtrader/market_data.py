"""Loading, validating and splitting daily close-price series."""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field
from datetime import date, datetime
from pathlib import Path
from typing import Sequence

import numpy as np

logger = logging.getLogger(__name__)

DEFAULT_DATE_COLUMN = "Date"
DEFAULT_CLOSE_COLUMN = "Close"
DEFAULT_DATE_FORMAT = "%Y-%m-%d"


class MarketDataError(ValueError):
    """Base class for price-series problems."""


class MissingColumn(MarketDataError):
    pass


class EmptySeries(MarketDataError):
    pass


class NonMonotonicDates(MarketDataError):
    pass


class TooShort(MarketDataError):
    pass


@dataclass(frozen=True)
class PriceSeries:
    """Chronologically ordered daily closes for one symbol.

    ``skipped_rows`` records how many input rows were dropped while loading;
    it does not take part in equality.
    """

    symbol: str
    dates: tuple[date, ...]
    closes: np.ndarray
    skipped_rows: int = field(default=0, compare=False)

    def __post_init__(self):
        closes = np.array(self.closes, dtype=np.float64)
        closes.setflags(write=False)
        object.__setattr__(self, "closes", closes)
        object.__setattr__(self, "dates", tuple(self.dates))
        if closes.ndim != 1 or len(closes) != len(self.dates):
            raise MarketDataError(
                f"dates ({len(self.dates)}) and closes ({closes.shape}) disagree in length"
            )
        if not np.all(np.isfinite(closes)) or np.any(closes <= 0):
            raise MarketDataError("closes must be finite and strictly positive")
        for prev, cur in zip(self.dates, self.dates[1:]):
            if not prev < cur:
                raise NonMonotonicDates(f"dates not strictly increasing at {prev} -> {cur}")

    def __len__(self) -> int:
        return len(self.closes)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, PriceSeries):
            return NotImplemented
        return (
            self.symbol == other.symbol
            and self.dates == other.dates
            and np.array_equal(self.closes, other.closes)
        )

    __hash__ = None  # type: ignore[assignment]

    def slice(self, start: int, stop: int) -> "PriceSeries":
        return PriceSeries(self.symbol, self.dates[start:stop], self.closes[start:stop])

    @classmethod
    def from_closes(
        cls, closes: Sequence[float], symbol: str = "SYNTH", start: date = date(2000, 1, 3)
    ) -> "PriceSeries":
        """Build a series with consecutive calendar dates; handy for synthetic data."""
        origin = np.datetime64(start, "D")
        dates = [(origin + np.timedelta64(i, "D")).astype(date) for i in range(len(closes))]
        return cls(symbol, dates, np.asarray(closes, dtype=np.float64))


@dataclass(frozen=True)
class SplitSpec:
    train_fraction: float = 0.5

    def __post_init__(self):
        if not 0.0 < self.train_fraction < 1.0:
            raise ValueError(f"train_fraction must lie in (0, 1), got {self.train_fraction}")


def _parse_close(raw: str | None) -> float | None:
    if raw is None:
        return None
    try:
        value = float(raw.strip())
    except ValueError:
        return None
    if not math.isfinite(value) or value <= 0:
        return None
    return value


def load_csv(
    path: str | Path,
    close_column: str = DEFAULT_CLOSE_COLUMN,
    date_column: str = DEFAULT_DATE_COLUMN,
    *,
    symbol: str | None = None,
    date_format: str = DEFAULT_DATE_FORMAT,
) -> PriceSeries:
    """Read a daily price CSV into a :class:`PriceSeries`.

    Rows with an unparseable date or a missing, non-numeric or non-positive
    close are skipped and counted. Other columns (open, high, volume...) are
    ignored. Rows are sorted by date; a repeated date is treated as corrupt
    input and raises :class:`NonMonotonicDates`.
    """
    path = Path(path)
    symbol = symbol if symbol is not None else path.stem
    rows: list[tuple[date, float]] = []
    skipped = 0
    with path.open(newline="") as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        for col in (date_column, close_column):
            if col not in header:
                raise MissingColumn(f"{path}: column {col!r} not in header {header}")
        for record in reader:
            close = _parse_close(record.get(close_column))
            try:
                day = datetime.strptime((record.get(date_column) or "").strip(), date_format).date()
            except ValueError:
                day = None
            if close is None or day is None:
                skipped += 1
                continue
            rows.append((day, close))

    if not rows:
        raise EmptySeries(f"{path}: no valid rows ({skipped} skipped)")
    if skipped:
        logger.warning("%s: skipped %d invalid row(s)", path, skipped)

    rows.sort(key=lambda r: r[0])
    for (d0, _), (d1, _) in zip(rows, rows[1:]):
        if d0 == d1:
            raise NonMonotonicDates(f"{path}: duplicate date {d0}")
    dates, closes = zip(*rows)
    return PriceSeries(symbol, dates, np.array(closes), skipped_rows=skipped)


def write_csv(
    series: PriceSeries,
    path: str | Path,
    close_column: str = DEFAULT_CLOSE_COLUMN,
    date_column: str = DEFAULT_DATE_COLUMN,
    date_format: str = DEFAULT_DATE_FORMAT,
) -> Path:
    path = Path(path)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow([date_column, close_column])
        for day, close in zip(series.dates, series.closes):
            # repr keeps the float round-trippable
            writer.writerow([day.strftime(date_format), repr(float(close))])
    return path


def split_series(
    series: PriceSeries, spec: SplitSpec = SplitSpec(), window_size: int = 90
) -> tuple[PriceSeries, PriceSeries]:
    """Chronological train/test split; the train part gets ``floor(fraction * N)`` rows."""
    n = len(series)
    if n < 2 * (window_size + 1):
        raise TooShort(
            f"{series.symbol}: {n} rows, need at least {2 * (window_size + 1)} for window {window_size}"
        )
    cut = math.floor(spec.train_fraction * n)
    return series.slice(0, cut), series.slice(cut, n)
