"""Shared fixtures: random but valid candle series, sine fixtures, rngs."""

import numpy as np
import pytest

from drltrade.market_data import FOUR_HOURS_MS, Kline, KlineSeries
from drltrade.synthetic import make_sine_series

# Acceptance tests append their PASS/FAIL lines here so they show up in the
# terminal summary even when output capture is on.
CRITERION_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if CRITERION_LINES:
        terminalreporter.section("acceptance criteria")
        for line in CRITERION_LINES:
            terminalreporter.line(line)


def make_random_series(
    rng: np.random.Generator,
    n: int,
    base: float = 100.0,
    vol: float = 0.02,
    start_time: int = 1_609_459_200_000,
    interval_ms: int = FOUR_HOURS_MS,
    symbol: str = "RND",
) -> KlineSeries:
    """Geometric random walk closes with consistent OHLC brackets."""
    closes = base * np.exp(np.cumsum(rng.normal(0.0, vol, size=n)))
    bars = []
    prev_close = base
    for i in range(n):
        o, c = prev_close, float(closes[i])
        spread_up = 1.0 + abs(rng.normal(0.0, vol / 2.0))
        spread_dn = 1.0 + abs(rng.normal(0.0, vol / 2.0))
        bars.append(
            Kline(
                open_time=start_time + i * interval_ms,
                open=o,
                high=max(o, c) * spread_up,
                low=min(o, c) / spread_dn,
                close=c,
                volume=float(abs(rng.normal(1000.0, 250.0))),
            )
        )
        prev_close = c
    series = KlineSeries(symbol=symbol, interval_ms=interval_ms, bars=bars)
    for bar in bars:
        bar.validate()
    return series


@pytest.fixture
def rng():
    return np.random.default_rng(0)


@pytest.fixture
def random_series(rng):
    return make_random_series(rng, 120)


@pytest.fixture
def sine_series():
    return make_sine_series(n_bars=200, base=100.0, amplitude=0.1, period=40)
