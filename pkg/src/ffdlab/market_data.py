"""OHLCV bar ingestion, validation and resampling.

Bars are the universal input of the pipeline: timestamped OHLCV records with
strictly increasing timestamps.  CSV loading validates every row (OHLC
consistency, non-negative volume, parseable fields) and reports the offending
physical line number on failure.  Resampling aggregates fine-grained bars
into N-minute bars over half-open wall-clock windows aligned to midnight UTC;
windows with no input bars are omitted, never forward-filled.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from datetime import datetime, timezone
from functools import cached_property
from pathlib import Path

import numpy as np

from .errors import FfdlabError

MS_PER_MINUTE = 60_000

CANONICAL_COLUMNS = ("timestamp", "open", "high", "low", "close", "volume")


class MissingColumn(FfdlabError):
    pass


class UnparseableRow(FfdlabError):
    def __init__(self, line_number: int, message: str):
        super().__init__(f"line {line_number}: {message}")
        self.line_number = line_number


class NonMonotonicTimestamp(FfdlabError):
    pass


class OHLCViolation(FfdlabError):
    def __init__(self, line_number: int, message: str):
        super().__init__(f"line {line_number}: {message}")
        self.line_number = line_number


class IncompatiblePeriod(FfdlabError):
    pass


@dataclass(frozen=True)
class Bar:
    """One OHLCV bar. ``timestamp`` is UTC epoch milliseconds (window open)."""

    timestamp: int
    open: float
    high: float
    low: float
    close: float
    volume: float

    def validate(self) -> str | None:
        """Return a description of the first violated invariant, or None."""
        values = (self.open, self.high, self.low, self.close, self.volume)
        if not all(np.isfinite(v) for v in values):
            return "non-finite field"
        if self.low > min(self.open, self.close):
            return f"low {self.low} above min(open, close)"
        if self.high < max(self.open, self.close):
            return f"high {self.high} below max(open, close)"
        if self.volume < 0:
            return f"negative volume {self.volume}"
        return None


@dataclass(frozen=True)
class BarSeries:
    """An ordered, validated sequence of bars for one instrument.

    Timestamps are strictly increasing and consecutive bars never overlap
    (spacing of at least ``period_minutes``).  Gaps are allowed and preserved.
    Instances are immutable; the array views below are cached and marked
    read-only, so a series can be shared freely across threads.
    """

    symbol: str
    period_minutes: int
    bars: tuple[Bar, ...]

    def __post_init__(self):
        if self.period_minutes <= 0:
            raise ValueError("period_minutes must be positive")
        period_ms = self.period_minutes * MS_PER_MINUTE
        prev = None
        for bar in self.bars:
            if prev is not None:
                if bar.timestamp <= prev:
                    raise NonMonotonicTimestamp(
                        f"timestamp {bar.timestamp} does not increase past {prev}"
                    )
                if bar.timestamp - prev < period_ms:
                    raise NonMonotonicTimestamp(
                        f"bars at {prev} and {bar.timestamp} overlap for a "
                        f"{self.period_minutes}-minute period"
                    )
            prev = bar.timestamp

    def __len__(self) -> int:
        return len(self.bars)

    def _array(self, field: str) -> np.ndarray:
        arr = np.array([getattr(b, field) for b in self.bars], dtype=float)
        arr.flags.writeable = False
        return arr

    @cached_property
    def timestamps(self) -> np.ndarray:
        arr = np.array([b.timestamp for b in self.bars], dtype=np.int64)
        arr.flags.writeable = False
        return arr

    @cached_property
    def opens(self) -> np.ndarray:
        return self._array("open")

    @cached_property
    def highs(self) -> np.ndarray:
        return self._array("high")

    @cached_property
    def lows(self) -> np.ndarray:
        return self._array("low")

    @cached_property
    def closes(self) -> np.ndarray:
        return self._array("close")

    @cached_property
    def volumes(self) -> np.ndarray:
        return self._array("volume")

    def slice(self, start: int, stop: int | None = None) -> "BarSeries":
        """Sub-series by bar position (not timestamp)."""
        return BarSeries(self.symbol, self.period_minutes, self.bars[start:stop])


def parse_timestamp(text: str) -> int:
    """Parse ISO-8601 or epoch-millisecond text into epoch milliseconds."""
    text = text.strip()
    try:
        return int(text)
    except ValueError:
        pass
    iso = text.replace("Z", "+00:00")
    dt = datetime.fromisoformat(iso)
    if dt.tzinfo is None:
        dt = dt.replace(tzinfo=timezone.utc)
    return int(dt.timestamp() * 1000)


def load_csv(
    path: str | Path,
    schema: dict[str, str] | None = None,
    symbol: str | None = None,
    period_minutes: int | None = None,
) -> BarSeries:
    """Load a CSV of OHLCV bars into a validated, sorted BarSeries.

    ``schema`` maps canonical names (timestamp, open, high, low, close,
    volume) to the file's column names; omitted keys default to the canonical
    name itself.  Rows may arrive in any order; the result is sorted by
    timestamp and duplicate timestamps are rejected.  When ``period_minutes``
    is not given it is inferred as the smallest timestamp gap.
    """
    path = Path(path)
    mapping = dict.fromkeys(CANONICAL_COLUMNS)
    for key in mapping:
        mapping[key] = (schema or {}).get(key, key)

    with path.open(newline="") as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        for canonical, actual in mapping.items():
            if actual not in header:
                raise MissingColumn(f"column {actual!r} (for {canonical}) not in header {header}")

        rows: list[tuple[int, Bar]] = []
        for line_number, record in enumerate(reader, start=2):
            try:
                bar = Bar(
                    timestamp=parse_timestamp(record[mapping["timestamp"]]),
                    open=float(record[mapping["open"]]),
                    high=float(record[mapping["high"]]),
                    low=float(record[mapping["low"]]),
                    close=float(record[mapping["close"]]),
                    volume=float(record[mapping["volume"]]),
                )
            except (TypeError, ValueError) as exc:
                raise UnparseableRow(line_number, str(exc)) from exc
            problem = bar.validate()
            if problem is not None:
                raise OHLCViolation(line_number, problem)
            rows.append((line_number, bar))

    rows.sort(key=lambda item: item[1].timestamp)
    for (_, a), (line_b, b) in zip(rows, rows[1:]):
        if b.timestamp == a.timestamp:
            raise NonMonotonicTimestamp(
                f"duplicate timestamp {b.timestamp} (line {line_b})"
            )

    bars = tuple(bar for _, bar in rows)
    if period_minutes is None:
        period_minutes = _infer_period(bars)
    return BarSeries(symbol or path.stem, period_minutes, bars)


def _infer_period(bars: tuple[Bar, ...]) -> int:
    if len(bars) < 2:
        return 1
    gaps = np.diff(np.array([b.timestamp for b in bars], dtype=np.int64))
    smallest = int(gaps.min())
    minutes = max(1, smallest // MS_PER_MINUTE)
    return minutes


def resample(series: BarSeries, target_minutes: int) -> BarSeries:
    """Aggregate bars into ``target_minutes`` windows aligned to midnight UTC.

    Each output bar covers the half-open window [k*target, (k+1)*target) and
    carries the window open time as its timestamp: open is the first input
    open, close the last input close, high/low the envelope, volume the sum.
    Empty windows produce no bar.
    """
    if target_minutes <= 0 or target_minutes % series.period_minutes != 0:
        raise IncompatiblePeriod(
            f"target {target_minutes}m is not a positive multiple of "
            f"{series.period_minutes}m"
        )
    window_ms = target_minutes * MS_PER_MINUTE

    out: list[Bar] = []
    current_key: int | None = None
    agg: dict | None = None

    def flush():
        if agg is not None:
            out.append(
                Bar(
                    timestamp=current_key * window_ms,
                    open=agg["open"],
                    high=agg["high"],
                    low=agg["low"],
                    close=agg["close"],
                    volume=agg["volume"],
                )
            )

    for bar in series.bars:
        key = bar.timestamp // window_ms
        if key != current_key:
            flush()
            current_key = key
            agg = {
                "open": bar.open,
                "high": bar.high,
                "low": bar.low,
                "close": bar.close,
                "volume": bar.volume,
            }
        else:
            agg["high"] = max(agg["high"], bar.high)
            agg["low"] = min(agg["low"], bar.low)
            agg["close"] = bar.close
            agg["volume"] += bar.volume
    flush()

    return BarSeries(series.symbol, target_minutes, tuple(out))
