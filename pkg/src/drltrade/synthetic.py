"""Deterministic synthetic kline series for tests and smoke experiments."""

from __future__ import annotations

import numpy as np

from .market_data import FOUR_HOURS_MS, Kline, KlineSeries


def make_sine_series(
    n_bars: int,
    base: float = 100.0,
    amplitude: float = 0.2,
    period: int = 50,
    volume: float = 1000.0,
    start_time: int = 0,
    interval_ms: int = FOUR_HOURS_MS,
    symbol: str = "SINE",
) -> KlineSeries:
    """Closes follow base * (1 + amplitude * sin(2 pi t / period)).

    Opens carry the previous close so bars chain without gaps; highs and lows
    bracket open and close. A predictable oscillation like this is learnable by
    any working policy-gradient agent, which makes it a good end-to-end probe.
    """
    t = np.arange(n_bars)
    closes = base * (1.0 + amplitude * np.sin(2.0 * np.pi * t / period))
    opens = np.empty(n_bars)
    opens[0] = closes[0]
    opens[1:] = closes[:-1]
    bars = []
    for i in range(n_bars):
        o, c = float(opens[i]), float(closes[i])
        bars.append(
            Kline(
                open_time=start_time + i * interval_ms,
                open=o,
                high=max(o, c),
                low=min(o, c),
                close=c,
                volume=volume,
            )
        )
    return KlineSeries(symbol=symbol, interval_ms=interval_ms, bars=bars)
