"""Shared fixtures and builders for the test suite."""

import numpy as np
import pytest

from ffdlab.features import Dataset, FeatureMatrix, NormalizationParams, PcaParams
from ffdlab.market_data import MS_PER_MINUTE, Bar, BarSeries

DAY_MS = 86_400_000
BASE_TS = 20_000 * DAY_MS  # 2024-10-04 00:00:00 UTC, day-aligned


def make_bars(
    closes,
    opens=None,
    highs=None,
    lows=None,
    volumes=None,
    period_minutes=1,
    start_ts=BASE_TS,
    timestamps=None,
    symbol="test",
):
    """BarSeries builder; defaults collapse each bar to its close price."""
    closes = np.asarray(closes, dtype=float)
    n = len(closes)
    opens = closes if opens is None else np.asarray(opens, dtype=float)
    if highs is None:
        highs = np.maximum(opens, closes)
    if lows is None:
        lows = np.minimum(opens, closes)
    volumes = np.ones(n) if volumes is None else np.asarray(volumes, dtype=float)
    if timestamps is None:
        timestamps = start_ts + np.arange(n) * period_minutes * MS_PER_MINUTE
    bars = tuple(
        Bar(
            timestamp=int(timestamps[i]),
            open=float(opens[i]),
            high=float(highs[i]),
            low=float(lows[i]),
            close=float(closes[i]),
            volume=float(volumes[i]),
        )
        for i in range(n)
    )
    return BarSeries(symbol, period_minutes, bars)


def make_dataset(X, y, split_index):
    """Dataset wrapper around raw arrays with pass-through parameters."""
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=int)
    names = tuple(f"pc_{i + 1}" for i in range(X.shape[1]))
    features = FeatureMatrix(names, X.copy(), np.arange(len(y), dtype=np.int64))
    norm = NormalizationParams(
        column_names=names,
        means=np.zeros(X.shape[1]),
        stds=np.ones(X.shape[1]),
        dropped=(),
    )
    pca = PcaParams(
        input_columns=names,
        column_means=np.zeros(X.shape[1]),
        components=np.eye(X.shape[1]),
        explained_variance=np.ones(X.shape[1]),
        explained_variance_ratio=np.full(X.shape[1], 1.0 / X.shape[1]),
    )
    return Dataset(
        features=features,
        labels=y,
        split_index=split_index,
        normalization_params=norm,
        pca_params=pca,
    )


@pytest.fixture
def rng():
    return np.random.default_rng(2024)
