import logging

import numpy as np
import pandas as pd
import pytest

from ffdlab.labeling import (
    LabelEvent,
    SeriesTooShort,
    TripleBarrierConfig,
    VolatilityEstimate,
    ema_volatility,
    fixed_horizon_labels,
    triple_barrier_labels,
)

from conftest import make_bars


def flat_vol(n, sigma, span=3):
    return VolatilityEstimate(span=span, values=np.full(n, float(sigma)))


def naive_first_touch(series, events_cfg, vol):
    """Independent rescan of every eligible entry (the labeling oracle)."""
    out = []
    h = events_cfg.h
    for t in range(len(series) - h):
        sigma = vol.values[t]
        if not np.isfinite(sigma) or sigma <= 0:
            continue
        close = series.bars[t].close
        upper = close * (1 + sigma * events_cfg.upfactor)
        lower = close * (1 + sigma * events_cfg.lowerfactor)
        label, touch = 0, t + h
        for j in range(t + 1, t + h + 1):
            bar = series.bars[j]
            up, low = bar.high >= upper, bar.low <= lower
            if up and low:
                du, dl = abs(upper - bar.open), abs(bar.open - lower)
                if du < dl:
                    label, touch = 1, j
                elif dl < du:
                    label, touch = -1, j
                else:
                    label, touch = 0, t + h
                break
            if up:
                label, touch = 1, j
                break
            if low:
                label, touch = -1, j
                break
        out.append((t, label, touch))
    return out


class TestEmaVolatility:
    def test_constant_price_zero_vol(self):
        series = make_bars(np.full(30, 50.0))
        vol = ema_volatility(series, span=5)
        assert np.all(np.isnan(vol.values[:5]))
        assert np.all(vol.values[5:] == 0.0)

    def test_alternating_prices_converge_to_return_magnitude(self):
        # returns alternate +-r; the estimate settles near |r| (within 3%),
        # and exactly at the closed-form limit of the weighted estimator:
        # via the geometric sums W = 1/(1-q), W2 = 1/(1-q^2) the weighted
        # mean tends to -+ r(1-q)/(1+q) and the debiased variance to
        # (r^2 - m^2) * W^2/(W^2 - W2)
        span = 20
        prices = np.where(np.arange(400) % 2 == 0, 100.0, 102.0)
        vol = ema_volatility(make_bars(prices), span=span)
        r = abs(np.log(102.0 / 100.0))
        assert vol.values[-1] == pytest.approx(r, rel=0.03)
        q = 1 - 2 / (span + 1)
        w_sum, w2_sum = 1 / (1 - q), 1 / (1 - q * q)
        mean = r * (1 - q) / (1 + q)
        limit = np.sqrt((r * r - mean * mean) * w_sum**2 / (w_sum**2 - w2_sum))
        assert vol.values[-1] == pytest.approx(limit, rel=1e-6)

    def test_matches_pandas_ewm(self, rng):
        closes = 100.0 * np.exp(np.cumsum(rng.normal(0, 0.01, 300)))
        series = make_bars(closes)
        span = 20
        vol = ema_volatility(series, span)
        returns = pd.Series(np.diff(np.log(closes)))
        expected = returns.ewm(span=span, adjust=True).std(bias=False).to_numpy()
        np.testing.assert_allclose(vol.values[span:], expected[span - 1 :], rtol=1e-9)

    def test_gbm_long_run_level(self):
        gen = np.random.default_rng(77)
        closes = 100.0 * np.exp(np.cumsum(gen.normal(0, 0.01, 5000)))
        series = make_bars(closes)
        vol = ema_volatility(series, span=20)
        level = np.nanmean(vol.values)
        assert abs(level - 0.01) / 0.01 < 0.15

    def test_too_short(self):
        with pytest.raises(SeriesTooShort):
            ema_volatility(make_bars([1.0, 2.0, 3.0]), span=3)


def barriers_cfg(h, up=2.0, down=-2.0, span=3):
    return TripleBarrierConfig(h=h, upfactor=up, lowerfactor=down, vol_span=span)


class TestTripleBarrier:
    def test_upper_touch_hand_trace(self):
        # entry close 100, sigma 0.01, factors +-2 -> barriers 102 / 98;
        # path 100, 101, 103, 99 touches 102 at entry+2
        series = make_bars([100.0, 101.0, 103.0, 99.0])
        events = triple_barrier_labels(series, barriers_cfg(h=3), vol=flat_vol(4, 0.01))
        event = events[0]
        assert event.entry_index == 0
        assert event.upper_barrier == pytest.approx(102.0)
        assert event.lower_barrier == pytest.approx(98.0)
        assert event.label == 1
        assert event.touch_index == 2

    def test_flat_path_vertical_barrier(self):
        series = make_bars([100.0, 100.0, 100.0, 100.0])
        events = triple_barrier_labels(series, barriers_cfg(h=3), vol=flat_vol(4, 0.01))
        event = events[0]
        assert event.label == 0
        assert event.touch_index == event.vertical_index == 3

    def test_lower_touch_first_in_time(self):
        # barriers 102 / 98; the path dips to 97 before rallying to 105
        series = make_bars([100.0, 97.0, 105.0])
        events = triple_barrier_labels(series, barriers_cfg(h=2), vol=flat_vol(3, 0.01))
        event = events[0]
        assert event.label == -1
        assert event.touch_index == 1

    def test_same_bar_tie_broken_by_open_distance(self):
        # one bar spans both barriers; its open (99) is closer to the lower
        # barrier (98) than the upper (102)
        series = make_bars(
            closes=[100.0, 100.0],
            opens=[100.0, 99.0],
            highs=[100.0, 103.0],
            lows=[100.0, 97.0],
        )
        events = triple_barrier_labels(series, barriers_cfg(h=1), vol=flat_vol(2, 0.01))
        assert events[0].label == -1
        assert events[0].touch_index == 1

    def test_equidistant_tie_labels_zero(self, caplog):
        # open exactly midway between the barriers
        series = make_bars(
            closes=[100.0, 100.0],
            opens=[100.0, 100.0],
            highs=[100.0, 103.0],
            lows=[100.0, 97.0],
        )
        with caplog.at_level(logging.WARNING, logger="ffdlab.labeling"):
            events = triple_barrier_labels(series, barriers_cfg(h=1), vol=flat_vol(2, 0.01))
        assert events[0].label == 0
        assert events[0].touch_index == events[0].vertical_index
        assert any("tie" in rec.message for rec in caplog.records)

    def test_zero_volatility_entries_skipped(self, caplog):
        vol = VolatilityEstimate(span=3, values=np.array([0.0, 0.01, 0.0, 0.01, 0.01, 0.01]))
        series = make_bars([100.0, 100.0, 100.0, 100.0, 100.0, 100.0])
        with caplog.at_level(logging.WARNING, logger="ffdlab.labeling"):
            events = triple_barrier_labels(series, barriers_cfg(h=2), vol=vol)
        assert [e.entry_index for e in events] == [1, 3]
        assert any("zero volatility" in rec.message for rec in caplog.records)

    def test_scale_invariance(self, rng):
        closes = 100.0 * np.exp(np.cumsum(rng.normal(0, 0.01, 200)))
        base = make_bars(closes)
        scaled = make_bars(closes * 1000.0)
        cfg = barriers_cfg(h=8, span=20)
        a = triple_barrier_labels(base, cfg)
        b = triple_barrier_labels(scaled, cfg)
        assert [(e.entry_index, e.label, e.touch_index) for e in a] == [
            (e.entry_index, e.label, e.touch_index) for e in b
        ]

    def test_huge_factors_give_all_zeros(self, rng):
        closes = 100.0 * np.exp(np.cumsum(rng.normal(0, 0.01, 120)))
        series = make_bars(closes)
        cfg = TripleBarrierConfig(h=5, upfactor=1e6, lowerfactor=-1e6, vol_span=20)
        events = triple_barrier_labels(series, cfg)
        assert events
        assert all(e.label == 0 and e.touch_index == e.vertical_index for e in events)

    def test_no_lookahead(self, rng):
        closes = 100.0 * np.exp(np.cumsum(rng.normal(0, 0.01, 150)))
        series = make_bars(closes)
        cfg = barriers_cfg(h=6, span=20)
        full = triple_barrier_labels(series, cfg)
        t = 60
        truncated = make_bars(closes[: t + cfg.h + 1])
        partial = triple_barrier_labels(truncated, cfg)
        event_full = next(e for e in full if e.entry_index == t)
        event_part = next(e for e in partial if e.entry_index == t)
        assert (event_full.label, event_full.touch_index) == (
            event_part.label, event_part.touch_index,
        )

    def test_event_invariants(self, rng):
        closes = 100.0 * np.exp(np.cumsum(rng.normal(0, 0.02, 300)))
        series = make_bars(closes)
        cfg = barriers_cfg(h=10, span=20)
        for e in triple_barrier_labels(series, cfg):
            assert e.entry_index < e.touch_index <= e.vertical_index
            assert e.vertical_index == e.entry_index + cfg.h
            if e.label == 1:
                assert series.bars[e.touch_index].high >= e.upper_barrier
            elif e.label == -1:
                assert series.bars[e.touch_index].low <= e.lower_barrier

    def test_matches_naive_oracle_on_random_paths(self):
        gen = np.random.default_rng(99)
        for _ in range(200):
            n = int(gen.integers(30, 50))
            h = int(gen.integers(1, 12))
            closes = 100.0 * np.exp(np.cumsum(gen.normal(0, 0.02, n)))
            opens = np.concatenate([[100.0], closes[:-1]])
            highs = np.maximum(opens, closes) * (1 + gen.uniform(0, 0.01, n))
            lows = np.minimum(opens, closes) * (1 - gen.uniform(0, 0.01, n))
            series = make_bars(closes, opens, highs, lows)
            cfg = barriers_cfg(h=h, up=1.5, down=-1.5)
            vol = flat_vol(n, 0.015)
            got = [
                (e.entry_index, e.label, e.touch_index)
                for e in triple_barrier_labels(series, cfg, vol=vol)
            ]
            assert got == naive_first_touch(series, cfg, vol)

    def test_too_short(self):
        with pytest.raises(SeriesTooShort):
            triple_barrier_labels(make_bars([1.0, 2.0]), barriers_cfg(h=2))


class TestFixedHorizon:
    def test_positive_return(self):
        series = make_bars([100.0, 100.0, 100.0, 103.0])
        labels = fixed_horizon_labels(series, h=3, threshold=0.02)
        assert labels[0] == 1

    def test_flat_return(self):
        series = make_bars([100.0, 101.0, 100.0])
        labels = fixed_horizon_labels(series, h=2, threshold=0.02)
        assert labels[0] == 0

    def test_negative_return(self):
        series = make_bars([100.0, 100.0, 97.0])
        labels = fixed_horizon_labels(series, h=2, threshold=0.02)
        assert labels[0] == -1

    def test_huge_threshold_all_zero(self, rng):
        closes = 100.0 * np.exp(np.cumsum(rng.normal(0, 0.02, 100)))
        labels = fixed_horizon_labels(make_bars(closes), h=5, threshold=1e9)
        assert np.all(labels == 0)

    def test_no_lookahead(self, rng):
        closes = 100.0 * np.exp(np.cumsum(rng.normal(0, 0.02, 100)))
        h = 4
        full = fixed_horizon_labels(make_bars(closes), h=h, threshold=0.01)
        t = 30
        part = fixed_horizon_labels(make_bars(closes[: t + h + 1]), h=h, threshold=0.01)
        assert full[t] == part[t]

    def test_too_short(self):
        with pytest.raises(SeriesTooShort):
            fixed_horizon_labels(make_bars([1.0, 2.0]), h=2, threshold=0.01)
