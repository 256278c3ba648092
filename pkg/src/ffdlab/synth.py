"""Seeded synthetic OHLCV generators for tests, demos and pipeline smoke runs.

Closes follow the chosen process on a log scale so prices stay positive; the
open is the previous close, highs/lows pad the open-close envelope with a
seeded positive intra-bar range, and volumes are seeded positive integers.
"""

from __future__ import annotations

import numpy as np

from .errors import FfdlabError
from .market_data import MS_PER_MINUTE, Bar, BarSeries

DEFAULT_START_TS = 1_641_168_000_000  # 2022-01-03 00:00:00 UTC

KINDS = ("random_walk", "gbm", "ar1")


class InvalidParams(FfdlabError):
    pass


def generate_synthetic(
    kind: str,
    length: int,
    seed: int,
    sigma: float = 0.01,
    mu: float = 0.0,
    phi: float = 0.8,
    start_price: float = 100.0,
    period_minutes: int = 1,
    intrabar_range: float = 0.0005,
    start_timestamp: int = DEFAULT_START_TS,
    symbol: str | None = None,
) -> BarSeries:
    """Generate a seeded OHLCV series.

    Kinds: ``random_walk`` (log-price random walk with step sigma), ``gbm``
    (log-price walk with drift mu), ``ar1`` (log price mean-reverting around
    the start with coefficient phi).  Same seed, same series.
    """
    if kind not in KINDS:
        raise InvalidParams(f"kind must be one of {KINDS}")
    if length < 100:
        raise InvalidParams("length must be >= 100")
    if sigma < 0 or start_price <= 0 or intrabar_range < 0:
        raise InvalidParams("sigma, start_price and intrabar_range must be non-negative")
    if kind == "ar1" and not -1.0 < phi < 1.0:
        raise InvalidParams("ar1 coefficient must lie in (-1, 1)")

    rng = np.random.default_rng(seed)
    shocks = rng.normal(0.0, sigma, size=length)
    if kind == "random_walk":
        log_path = np.cumsum(shocks)
    elif kind == "gbm":
        log_path = np.cumsum(mu + shocks)
    else:
        log_path = np.empty(length)
        level = 0.0
        for t in range(length):
            level = phi * level + shocks[t]
            log_path[t] = level
    closes = start_price * np.exp(log_path)

    opens = np.concatenate([[start_price], closes[:-1]])
    pad_hi = rng.uniform(0.0, intrabar_range, size=length) * closes
    pad_lo = rng.uniform(0.0, intrabar_range, size=length) * closes
    highs = np.maximum(opens, closes) + pad_hi
    lows = np.minimum(opens, closes) - pad_lo
    volumes = rng.integers(1, 10_000, size=length).astype(float)

    period_ms = period_minutes * MS_PER_MINUTE
    bars = tuple(
        Bar(
            timestamp=start_timestamp + t * period_ms,
            open=float(opens[t]),
            high=float(highs[t]),
            low=float(lows[t]),
            close=float(closes[t]),
            volume=float(volumes[t]),
        )
        for t in range(length)
    )
    return BarSeries(symbol or f"synthetic-{kind}", period_minutes, bars)
