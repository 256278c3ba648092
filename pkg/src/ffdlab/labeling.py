"""Path-dependent and fixed-horizon labeling of price series.

The primary method places three barriers around each entry bar: an upper
profit barrier and lower loss barrier scaled by exponentially weighted
volatility, and a vertical time barrier ``h`` bars out.  The first barrier
touched decides the label (+1 upper, -1 lower, 0 vertical); touches are
tested against bar highs/lows since fills happen intra-bar.

The fixed-horizon baseline labels by the sign of the h-bar return against a
constant threshold.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import FfdlabError
from .market_data import BarSeries

logger = logging.getLogger(__name__)


class SeriesTooShort(FfdlabError):
    pass


class DegenerateBarrier(FfdlabError):
    pass


@dataclass(frozen=True)
class VolatilityEstimate:
    """Per-bar volatility, aligned to its bar series.

    ``values[t]`` is the exponentially weighted standard deviation of one-bar
    close-to-close log returns through bar t; the warm-up prefix (t < span)
    is NaN.
    """

    span: int
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        self.values.flags.writeable = False


@dataclass(frozen=True)
class TripleBarrierConfig:
    """Barrier parameters: vertical window h, volatility multipliers, EMA span.

    ``upfactor`` must be positive and ``lowerfactor`` negative so the barrier
    formulas close_t * (1 + sigma * factor) stay literal for both sides.
    """

    h: int = 12
    upfactor: float = 3.0
    lowerfactor: float = -3.0
    vol_span: int = 20

    def __post_init__(self):
        if self.h < 1:
            raise ValueError("h must be >= 1")
        if self.upfactor <= 0:
            raise ValueError("upfactor must be positive")
        if self.lowerfactor >= 0:
            raise ValueError("lowerfactor must be negative")
        if self.vol_span < 1:
            raise ValueError("vol_span must be >= 1")


@dataclass(frozen=True)
class LabelEvent:
    """One labeled observation.

    ``touch_index`` is the bar where the deciding barrier was hit; for label 0
    it equals ``vertical_index``.  A bar whose range crosses both horizontal
    barriers is decided by the barrier closer to that bar's open; the
    equidistant tie falls back to the timeout label at the vertical barrier.
    """

    entry_index: int
    upper_barrier: float
    lower_barrier: float
    vertical_index: int
    touch_index: int
    label: int


def ema_volatility(series: BarSeries, span: int) -> VolatilityEstimate:
    """Exponentially weighted std of one-bar log returns (span-parameterized).

    Uses decay q = 1 - 2/(span+1) with full-history weights and the
    small-sample bias correction W^2 / (W^2 - W2), matching the conventional
    adjusted, unbiased exponentially weighted variance.  Defined from bar
    ``span`` onward; earlier entries are NaN.
    """
    if span < 1:
        raise ValueError("span must be >= 1")
    if len(series) <= span:
        raise SeriesTooShort(f"need more than span={span} bars, got {len(series)}")
    closes = series.closes
    if np.any(closes <= 0):
        raise ValueError("log returns require positive closes")
    returns = np.diff(np.log(closes))

    q = 1.0 - 2.0 / (span + 1.0)
    values = np.full(len(series), np.nan)
    s1 = 0.0  # sum q^i * r
    s2 = 0.0  # sum q^i * r^2
    w = 0.0   # sum q^i
    w2 = 0.0  # sum q^(2i)
    for t, r in enumerate(returns, start=1):
        s1 = q * s1 + r
        s2 = q * s2 + r * r
        w = q * w + 1.0
        w2 = q * q * w2 + 1.0
        if t < span:
            continue
        mean = s1 / w
        biased_var = s2 / w - mean * mean
        denom = w * w - w2
        var = max(0.0, biased_var * (w * w) / denom) if denom > 0 else np.nan
        values[t] = math.sqrt(var)
    return VolatilityEstimate(span=span, values=values)


def _first_touch(
    highs: np.ndarray,
    lows: np.ndarray,
    opens: np.ndarray,
    entry: int,
    upper: float,
    lower: float,
    h: int,
) -> tuple[int, int, bool]:
    """Scan bars entry+1..entry+h; returns (label, touch_index, tied)."""
    vertical = entry + h
    for j in range(entry + 1, vertical + 1):
        hit_up = highs[j] >= upper
        hit_low = lows[j] <= lower
        if hit_up and hit_low:
            dist_up = abs(upper - opens[j])
            dist_low = abs(opens[j] - lower)
            if dist_up < dist_low:
                return 1, j, False
            if dist_low < dist_up:
                return -1, j, False
            return 0, vertical, True
        if hit_up:
            return 1, j, False
        if hit_low:
            return -1, j, False
    return 0, vertical, False


def triple_barrier_labels(
    series: BarSeries,
    cfg: TripleBarrierConfig,
    vol: VolatilityEstimate | None = None,
) -> list[LabelEvent]:
    """Label every bar with defined, positive volatility by first barrier touch.

    Barriers for entry t are close_t*(1 + sigma_t*upfactor) and
    close_t*(1 + sigma_t*lowerfactor), scanned over bars t+1..t+h.  Entries
    with zero volatility would have zero-width barriers and are skipped (the
    count is logged), as are entries too close to the end for a full vertical
    window.  Overlapping events are intentional: one event per eligible bar.
    """
    if vol is None:
        if len(series) <= cfg.vol_span + cfg.h:
            raise SeriesTooShort(
                f"need more than vol_span + h = {cfg.vol_span + cfg.h} bars, got {len(series)}"
            )
        vol = ema_volatility(series, cfg.vol_span)
    elif len(series) <= cfg.h:
        raise SeriesTooShort(f"need more than h = {cfg.h} bars, got {len(series)}")
    if len(vol.values) != len(series):
        raise ValueError("volatility not aligned to series")

    highs, lows, opens, closes = series.highs, series.lows, series.opens, series.closes
    events: list[LabelEvent] = []
    skipped_zero_vol = 0
    ties = 0
    last_entry = len(series) - 1 - cfg.h
    for t in range(len(series)):
        if t > last_entry:
            break
        sigma = vol.values[t]
        if not np.isfinite(sigma):
            continue
        if sigma <= 0.0:
            skipped_zero_vol += 1
            continue
        upper = closes[t] * (1.0 + sigma * cfg.upfactor)
        lower = closes[t] * (1.0 + sigma * cfg.lowerfactor)
        label, touch, tied = _first_touch(highs, lows, opens, t, upper, lower, cfg.h)
        ties += tied
        events.append(
            LabelEvent(
                entry_index=t,
                upper_barrier=upper,
                lower_barrier=lower,
                vertical_index=t + cfg.h,
                touch_index=touch,
                label=label,
            )
        )
    if skipped_zero_vol:
        logger.warning(
            "%d entries skipped: zero volatility gives degenerate barriers", skipped_zero_vol
        )
    if ties:
        logger.warning("%d both-barrier bars were equidistant ties, labeled 0", ties)
    return events


def fixed_horizon_labels(series: BarSeries, h: int, threshold: float) -> np.ndarray:
    """Sign of the h-bar close return against a constant threshold.

    Returns labels for entries t = 0..T-1-h: -1 below -threshold, +1 above
    +threshold, else 0.
    """
    if h < 1:
        raise ValueError("h must be >= 1")
    if threshold <= 0:
        raise ValueError("threshold must be positive")
    if len(series) <= h:
        raise SeriesTooShort(f"need more than h={h} bars, got {len(series)}")
    closes = series.closes
    r = closes[h:] / closes[:-h] - 1.0
    labels = np.zeros(len(r), dtype=int)
    labels[r > threshold] = 1
    labels[r < -threshold] = -1
    return labels
