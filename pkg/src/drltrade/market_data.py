"""Fetching, parsing, validating and splitting historical OHLCV candle series.

A candle ("kline") is one open/high/low/close/volume bar for a fixed interval.
Raw rows come either from the exchange REST payload (arrays with decimal-string
prices) or from CSV fixtures; both funnel through :func:`parse_klines`, which
sorts, validates and forward-fills interval gaps so downstream indicator code
can assume a contiguous series.
"""

from __future__ import annotations

import csv
import math
import time
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import (
    EmptyInput,
    EmptyRange,
    InvariantViolation,
    MalformedRow,
    NetworkError,
    RateLimited,
    TooShort,
)

FOUR_HOURS_MS = 4 * 60 * 60 * 1000

INTERVAL_MS = {
    "1m": 60_000,
    "3m": 180_000,
    "5m": 300_000,
    "15m": 900_000,
    "30m": 1_800_000,
    "1h": 3_600_000,
    "2h": 7_200_000,
    "4h": FOUR_HOURS_MS,
    "6h": 21_600_000,
    "8h": 28_800_000,
    "12h": 43_200_000,
    "1d": 86_400_000,
}

CSV_HEADER = ["open_time", "open", "high", "low", "close", "volume"]


@dataclass(frozen=True)
class Kline:
    """One OHLCV bar. Prices are quote currency per base unit."""

    open_time: int
    open: float
    high: float
    low: float
    close: float
    volume: float

    def validate(self) -> None:
        for name in ("open", "high", "low", "close"):
            value = getattr(self, name)
            if not math.isfinite(value) or value <= 0.0:
                raise InvariantViolation(f"{name}={value!r} must be a positive finite price")
        if not math.isfinite(self.volume) or self.volume < 0.0:
            raise InvariantViolation(f"volume={self.volume!r} must be finite and >= 0")
        if self.low > min(self.open, self.close) or max(self.open, self.close) > self.high:
            raise InvariantViolation(
                f"bar at {self.open_time} breaks low <= open/close <= high: "
                f"o={self.open} h={self.high} l={self.low} c={self.close}"
            )


@dataclass
class KlineSeries:
    """Time-ordered, gapless candle series for one market pair.

    ``filled_indices`` marks bars synthesized by the gap policy (previous close
    copied into OHLC, volume zero); the CSV form does not carry the flags.
    """

    symbol: str
    interval_ms: int
    bars: list[Kline]
    filled_indices: tuple[int, ...] = field(default_factory=tuple)

    def __len__(self) -> int:
        return len(self.bars)

    def __getitem__(self, i: int) -> Kline:
        return self.bars[i]

    @cached_property
    def open_times(self) -> np.ndarray:
        return np.array([b.open_time for b in self.bars], dtype=np.int64)

    @cached_property
    def opens(self) -> np.ndarray:
        return np.array([b.open for b in self.bars], dtype=np.float64)

    @cached_property
    def highs(self) -> np.ndarray:
        return np.array([b.high for b in self.bars], dtype=np.float64)

    @cached_property
    def lows(self) -> np.ndarray:
        return np.array([b.low for b in self.bars], dtype=np.float64)

    @cached_property
    def closes(self) -> np.ndarray:
        return np.array([b.close for b in self.bars], dtype=np.float64)

    @cached_property
    def volumes(self) -> np.ndarray:
        return np.array([b.volume for b in self.bars], dtype=np.float64)


def _bar_from_row(row) -> Kline:
    if isinstance(row, Mapping):
        try:
            fields = [row[k] for k in CSV_HEADER]
        except KeyError as exc:
            raise MalformedRow(f"row missing field {exc.args[0]!r}: {row!r}") from exc
    elif isinstance(row, Sequence) and not isinstance(row, (str, bytes)):
        if len(row) < 6:
            raise MalformedRow(f"row has {len(row)} fields, need 6: {row!r}")
        fields = list(row[:6])
    else:
        raise MalformedRow(f"unsupported row type {type(row).__name__}: {row!r}")
    try:
        open_time = int(fields[0])
        numbers = [float(v) for v in fields[1:6]]
    except (TypeError, ValueError) as exc:
        raise MalformedRow(f"non-numeric field in row {row!r}") from exc
    return Kline(open_time, *numbers)


def fill_gaps(bars: list[Kline], interval_ms: int) -> tuple[list[Kline], tuple[int, ...]]:
    """Insert forward-filled bars wherever consecutive open_times skip intervals."""
    out: list[Kline] = [bars[0]]
    filled: list[int] = []
    for bar in bars[1:]:
        gap = bar.open_time - out[-1].open_time
        if gap <= 0:
            raise InvariantViolation(f"duplicate open_time {bar.open_time}")
        if gap % interval_ms != 0:
            raise InvariantViolation(
                f"open_time {bar.open_time} not aligned to interval {interval_ms} "
                f"after {out[-1].open_time}"
            )
        while bar.open_time - out[-1].open_time > interval_ms:
            prev = out[-1]
            synthetic = Kline(
                open_time=prev.open_time + interval_ms,
                open=prev.close,
                high=prev.close,
                low=prev.close,
                close=prev.close,
                volume=0.0,
            )
            filled.append(len(out))
            out.append(synthetic)
        out.append(bar)
    return out, tuple(filled)


def parse_klines(
    rows: Iterable,
    symbol: str = "",
    interval_ms: int = FOUR_HOURS_MS,
) -> KlineSeries:
    """Parse raw rows into a validated, time-sorted, gap-filled KlineSeries.

    Accepts exchange-style array rows (``[openTime, open, high, low, close,
    volume, ...]`` with string prices) or mappings keyed by the CSV header.
    """
    bars = [_bar_from_row(row) for row in rows]
    if not bars:
        raise EmptyInput("no kline rows to parse")
    for bar in bars:
        bar.validate()
    bars.sort(key=lambda b: b.open_time)
    bars, filled = fill_gaps(bars, interval_ms)
    return KlineSeries(symbol=symbol, interval_ms=interval_ms, bars=bars, filled_indices=filled)


def split_train_test(series: KlineSeries, train_fraction: float) -> tuple[KlineSeries, KlineSeries]:
    """Chronological split: first floor(n * fraction) bars train, rest test."""
    if not 0.0 < train_fraction < 1.0:
        raise ValueError(f"train_fraction must be in (0, 1), got {train_fraction}")
    n = len(series)
    if n < 2:
        raise TooShort(f"need at least 2 bars to split, got {n}")
    cut = int(math.floor(n * train_fraction))
    train = KlineSeries(
        symbol=series.symbol,
        interval_ms=series.interval_ms,
        bars=series.bars[:cut],
        filled_indices=tuple(i for i in series.filled_indices if i < cut),
    )
    test = KlineSeries(
        symbol=series.symbol,
        interval_ms=series.interval_ms,
        bars=series.bars[cut:],
        filled_indices=tuple(i - cut for i in series.filled_indices if i >= cut),
    )
    return train, test


def save_klines_csv(series: KlineSeries, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(CSV_HEADER)
        for bar in series.bars:
            writer.writerow([bar.open_time, repr(bar.open), repr(bar.high),
                             repr(bar.low), repr(bar.close), repr(bar.volume)])


def load_klines_csv(path, symbol: str = "", interval_ms: int = FOUR_HOURS_MS) -> KlineSeries:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise EmptyInput(f"{path} is empty")
        if [h.strip() for h in header] != CSV_HEADER:
            raise MalformedRow(f"{path} header {header!r} != {CSV_HEADER!r}")
        rows = [row for row in reader if row]
    return parse_klines(rows, symbol=symbol, interval_ms=interval_ms)


def _default_transport(url: str, params: dict, timeout: float):
    import requests

    try:
        resp = requests.get(url, params=params, timeout=timeout)
    except requests.RequestException as exc:
        raise NetworkError(str(exc)) from exc
    body = resp.json() if resp.status_code == 200 else None
    return resp.status_code, body


class BinanceClient:
    """Paginated, rate-limit-aware client for the public klines endpoint.

    ``transport`` is injectable so tests replay recorded responses instead of
    touching the network: it takes ``(url, params, timeout)`` and returns
    ``(status_code, parsed_json_or_None)``.
    """

    def __init__(
        self,
        base_url: str = "https://api.binance.com",
        transport=None,
        page_limit: int = 1000,
        max_retries: int = 5,
        backoff_base: float = 0.5,
        timeout: float = 30.0,
        sleep=time.sleep,
    ):
        self.base_url = base_url.rstrip("/")
        self.transport = transport or _default_transport
        self.page_limit = page_limit
        self.max_retries = max_retries
        self.backoff_base = backoff_base
        self.timeout = timeout
        self.sleep = sleep
        self.request_count = 0

    def _request_page(self, params: dict) -> list:
        url = f"{self.base_url}/api/v3/klines"
        last_status = None
        for attempt in range(self.max_retries + 1):
            if attempt > 0:
                self.sleep(self.backoff_base * 2 ** (attempt - 1))
            self.request_count += 1
            try:
                status, body = self.transport(url, params, self.timeout)
            except NetworkError:
                if attempt == self.max_retries:
                    raise
                last_status = "exception"
                continue
            if status == 200:
                return body
            last_status = status
            if status != 429 and not 500 <= status < 600:
                raise NetworkError(f"klines request failed with HTTP {status}")
        if last_status == 429:
            raise RateLimited(f"still rate limited after {self.max_retries} retries")
        raise NetworkError(f"klines request failed after retries (last status {last_status})")

    def fetch_klines(self, symbol: str, interval: str, start_time: int, end_time: int) -> KlineSeries:
        """Fetch all bars with open_time in [start_time, end_time), validated."""
        if interval not in INTERVAL_MS:
            raise ValueError(f"unsupported interval {interval!r}")
        if start_time >= end_time:
            raise EmptyRange(f"start {start_time} >= end {end_time}")
        interval_ms = INTERVAL_MS[interval]
        rows: list = []
        cursor = start_time
        while cursor < end_time:
            page = self._request_page(
                {
                    "symbol": symbol,
                    "interval": interval,
                    "startTime": cursor,
                    "endTime": end_time - 1,
                    "limit": self.page_limit,
                }
            )
            if not page:
                break
            rows.extend(page)
            cursor = int(page[-1][0]) + interval_ms
            if len(page) < self.page_limit:
                break
        if not rows:
            raise EmptyRange(f"no bars returned for [{start_time}, {end_time})")
        return parse_klines(rows, symbol=symbol, interval_ms=interval_ms)
