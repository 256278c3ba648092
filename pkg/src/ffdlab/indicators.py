"""Technical indicators on OHLCV arrays.

All functions take plain numpy arrays, return full-length arrays aligned to
the input, and mark their warm-up prefix NaN.  Every indicator is strictly
backward-looking: the value at index t never uses data past t.
"""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view


def _warmup(values: np.ndarray, n_leading: int) -> np.ndarray:
    values[: min(n_leading, len(values))] = np.nan
    return values


def sma(x: np.ndarray, n: int) -> np.ndarray:
    """Simple moving average over the trailing n values."""
    out = np.full(len(x), np.nan)
    if len(x) >= n:
        out[n - 1 :] = sliding_window_view(x, n).mean(axis=1)
    return out


def ema(x: np.ndarray, n: int) -> np.ndarray:
    """Exponential moving average, alpha = 2/(n+1), seeded at the first value.

    Leading NaNs in the input are skipped; the first n-1 outputs after the
    seed are masked as warm-up (they still feed the recursion).
    """
    out = np.full(len(x), np.nan)
    finite = np.nonzero(np.isfinite(x))[0]
    if finite.size == 0:
        return out
    start = int(finite[0])
    alpha = 2.0 / (n + 1.0)
    level = x[start]
    out[start] = level
    for t in range(start + 1, len(x)):
        level = level + alpha * (x[t] - level)
        out[t] = level
    return _warmup(out, start + n - 1)


def macd(close: np.ndarray, fast: int = 12, slow: int = 26, signal_n: int = 9):
    """MACD line (fast EMA - slow EMA), signal EMA and histogram."""
    line = ema(close, fast) - ema(close, slow)
    signal = ema(line, signal_n)
    return line, signal, line - signal


def rsi(close: np.ndarray, n: int = 14) -> np.ndarray:
    """Relative strength index with Wilder smoothing; flat windows read 50."""
    out = np.full(len(close), np.nan)
    if len(close) <= n:
        return out
    delta = np.diff(close)
    gain = np.where(delta > 0, delta, 0.0)
    loss = np.where(delta < 0, -delta, 0.0)
    avg_gain = gain[:n].mean()
    avg_loss = loss[:n].mean()
    out[n] = _rsi_value(avg_gain, avg_loss)
    for t in range(n + 1, len(close)):
        avg_gain = (avg_gain * (n - 1) + gain[t - 1]) / n
        avg_loss = (avg_loss * (n - 1) + loss[t - 1]) / n
        out[t] = _rsi_value(avg_gain, avg_loss)
    return out


def _rsi_value(avg_gain: float, avg_loss: float) -> float:
    if avg_loss == 0.0 and avg_gain == 0.0:
        return 50.0
    if avg_loss == 0.0:
        return 100.0
    return 100.0 - 100.0 / (1.0 + avg_gain / avg_loss)


def stochastic_k(high: np.ndarray, low: np.ndarray, close: np.ndarray, n: int = 14) -> np.ndarray:
    """%K: position of the close within the trailing n-bar range (flat: 50)."""
    out = np.full(len(close), np.nan)
    if len(close) < n:
        return out
    hh = sliding_window_view(high, n).max(axis=1)
    ll = sliding_window_view(low, n).min(axis=1)
    span = hh - ll
    c = close[n - 1 :]
    with np.errstate(invalid="ignore", divide="ignore"):
        k = np.where(span > 0, 100.0 * (c - ll) / span, 50.0)
    out[n - 1 :] = k
    return out


def bollinger(close: np.ndarray, n: int = 20, width: float = 2.0):
    """Bollinger bands: SMA middle, +-width population stds."""
    mid = sma(close, n)
    sd = np.full(len(close), np.nan)
    if len(close) >= n:
        sd[n - 1 :] = sliding_window_view(close, n).std(axis=1)
    upper = mid + width * sd
    lower = mid - width * sd
    return upper, mid, lower


def atr(high: np.ndarray, low: np.ndarray, close: np.ndarray, n: int = 14) -> np.ndarray:
    """Average true range with Wilder smoothing, seeded on the first n TRs."""
    out = np.full(len(close), np.nan)
    if len(close) <= n:
        return out
    prev_close = close[:-1]
    tr = np.maximum(
        high[1:] - low[1:],
        np.maximum(np.abs(high[1:] - prev_close), np.abs(low[1:] - prev_close)),
    )
    level = tr[:n].mean()
    out[n] = level
    for t in range(n + 1, len(close)):
        level = (level * (n - 1) + tr[t - 1]) / n
        out[t] = level
    return out


def roc(close: np.ndarray, n: int = 10) -> np.ndarray:
    """Rate of change over n bars, in percent."""
    out = np.full(len(close), np.nan)
    if len(close) > n:
        out[n:] = 100.0 * (close[n:] / close[:-n] - 1.0)
    return out


def obv(close: np.ndarray, volume: np.ndarray) -> np.ndarray:
    """On-balance volume: cumulative volume signed by the close-to-close move."""
    direction = np.sign(np.diff(close))
    flows = np.concatenate([[volume[0]], direction * volume[1:]])
    return np.cumsum(flows)


def cci(high: np.ndarray, low: np.ndarray, close: np.ndarray, n: int = 20) -> np.ndarray:
    """Commodity channel index on the typical price (flat windows read 0)."""
    out = np.full(len(close), np.nan)
    if len(close) < n:
        return out
    tp = (high + low + close) / 3.0
    windows = sliding_window_view(tp, n)
    means = windows.mean(axis=1)
    mad = np.abs(windows - means[:, None]).mean(axis=1)
    current = tp[n - 1 :]
    with np.errstate(invalid="ignore", divide="ignore"):
        vals = np.where(mad > 0, (current - means) / (0.015 * mad), 0.0)
    out[n - 1 :] = vals
    return out


def williams_r(high: np.ndarray, low: np.ndarray, close: np.ndarray, n: int = 14) -> np.ndarray:
    """Williams %R: -100..0 position of the close in the n-bar range (flat: -50)."""
    out = np.full(len(close), np.nan)
    if len(close) < n:
        return out
    hh = sliding_window_view(high, n).max(axis=1)
    ll = sliding_window_view(low, n).min(axis=1)
    span = hh - ll
    c = close[n - 1 :]
    with np.errstate(invalid="ignore", divide="ignore"):
        vals = np.where(span > 0, -100.0 * (hh - c) / span, -50.0)
    out[n - 1 :] = vals
    return out
