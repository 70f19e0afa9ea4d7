"""Daily-bar ingestion, period aggregation and rolling feature windows.

The pipeline is: daily bars per ticker -> per-period records (accumulated
return ``r`` and accumulated turnover ``v`` at monthly / weekly / daily
frequency on a shared calendar grid) -> rolling 20-step windows per stock
-> cross-sections normalized across stocks per (time-step, feature).

Calendar conventions: months are calendar months, weeks are ISO weeks,
and the daily grid is the union of dates traded by any ticker (a proxy
for the exchange calendar). A grid period in which a ticker has no bars
is recorded as invalid; any window spanning an invalid period is
dropped.
"""

import csv
from dataclasses import dataclass, field
from datetime import date as _date, timedelta

import numpy as np

from .errors import ConfigError, ContractError, DataError, DegenerateSectionError, ParseError

WINDOW = 20
FREQUENCIES = ("monthly", "weekly", "daily")
CSV_COLUMNS = ("ticker", "date", "close_adj", "turnover_rate")


@dataclass(frozen=True)
class DailyBar:
    ticker: str
    date: _date
    close_adj: float
    turnover_rate: float


@dataclass(frozen=True)
class PeriodRecord:
    """One stock at one period: accumulated return and turnover.

    ``valid`` is False when the whole period had no trading; ``r`` and
    ``v`` are NaN in that case.
    """

    ticker: str
    period_index: int
    r: float
    v: float
    valid: bool


@dataclass(frozen=True)
class FeatureWindow:
    """The 20x2 feature matrix for one stock ending at ``decision_time``.

    Row order is oldest first (lag 19 down to lag 0); column 0 is the
    period return, column 1 the period turnover.
    """

    ticker: str
    decision_time: int
    matrix: np.ndarray
    complete: bool = True


@dataclass
class CrossSection:
    """All stocks' windows sharing one decision time."""

    decision_time: int
    windows: list
    normalized: bool = False

    @property
    def tickers(self):
        return [w.ticker for w in self.windows]

    def stacked(self):
        """(N, 20, 2) array of all window matrices."""
        return np.stack([w.matrix for w in self.windows])


class PeriodPanel:
    """Per-ticker period-record series on a shared calendar grid.

    Columnar storage: ``r``/``v``/``valid`` are (periods, tickers)
    arrays; ``labels[t]`` is the human-readable period name.
    """

    def __init__(self, frequency, labels, tickers, r, v, valid):
        self.frequency = frequency
        self.labels = list(labels)
        self.tickers = list(tickers)
        self.r = np.asarray(r, dtype=np.float64)
        self.v = np.asarray(v, dtype=np.float64)
        self.valid = np.asarray(valid, dtype=bool)
        self._col = {t: i for i, t in enumerate(self.tickers)}

    @property
    def n_periods(self):
        return len(self.labels)

    def record(self, ticker, t):
        i = self._col[ticker]
        return PeriodRecord(ticker, t, float(self.r[t, i]), float(self.v[t, i]),
                            bool(self.valid[t, i]))

    def records(self, ticker):
        return [self.record(ticker, t) for t in range(self.n_periods)]


# -- ingestion ----------------------------------------------------------------

def ingest_daily_csv(path):
    """Parse the daily-bar CSV into a per-ticker sorted panel.

    Expected header: ``ticker,date,close_adj,turnover_rate`` (any column
    order), ISO-8601 dates, turnover as a fraction. Rejects duplicate
    (ticker, date) pairs and invalid prices.
    """
    by_ticker = {}
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or set(reader.fieldnames) != set(CSV_COLUMNS):
            raise ParseError(
                f"header must contain exactly {','.join(CSV_COLUMNS)}; got {reader.fieldnames}")
        for row in reader:
            line = reader.line_num
            ticker = (row["ticker"] or "").strip()
            if not ticker:
                raise ParseError("empty ticker", line=line)
            try:
                day = _date.fromisoformat(row["date"].strip())
            except (ValueError, AttributeError):
                raise ParseError(f"bad date {row['date']!r}", line=line) from None
            try:
                close = float(row["close_adj"])
                turnover = float(row["turnover_rate"])
            except (TypeError, ValueError):
                raise ParseError("non-numeric close_adj/turnover_rate", line=line) from None
            if not np.isfinite(close) or close <= 0:
                raise ParseError(f"close_adj must be > 0, got {close}", line=line)
            if not np.isfinite(turnover) or turnover < 0:
                raise ParseError(f"turnover_rate must be >= 0, got {turnover}", line=line)
            by_ticker.setdefault(ticker, []).append(DailyBar(ticker, day, close, turnover))

    for ticker, bars in by_ticker.items():
        bars.sort(key=lambda b: b.date)
        for prev, cur in zip(bars, bars[1:]):
            if prev.date == cur.date:
                raise DataError(f"duplicate bar for {ticker} on {cur.date}")
    return by_ticker


# -- period calendar ----------------------------------------------------------

def _month_key(day):
    return (day.year, day.month)


def _week_key(day):
    iso = day.isocalendar()
    return (iso[0], iso[1])


def _month_label(key):
    return f"{key[0]:04d}-{key[1]:02d}"


def _week_label(key):
    return f"{key[0]:04d}-W{key[1]:02d}"


def _enumerate_months(first, last):
    keys = []
    y, m = first
    while (y, m) <= last:
        keys.append((y, m))
        m += 1
        if m == 13:
            y, m = y + 1, 1
    return keys


def _enumerate_weeks(first_day, last_day):
    monday = first_day - timedelta(days=first_day.isoweekday() - 1)
    keys = []
    while True:
        key = _week_key(monday)
        keys.append(key)
        if key == _week_key(last_day):
            break
        monday += timedelta(days=7)
    return keys


def _period_grid(panel, frequency):
    """Global calendar grid: (ordered keys, labels, key->index)."""
    all_dates = [b.date for bars in panel.values() for b in bars]
    first, last = min(all_dates), max(all_dates)
    if frequency == "monthly":
        keys = _enumerate_months(_month_key(first), _month_key(last))
        labels = [_month_label(k) for k in keys]
        keyfn = _month_key
    elif frequency == "weekly":
        keys = _enumerate_weeks(first, last)
        labels = [_week_label(k) for k in keys]
        keyfn = _week_key
    elif frequency == "daily":
        keys = sorted({d for d in all_dates})
        labels = [k.isoformat() for k in keys]
        keyfn = lambda d: d
    else:
        raise ConfigError(f"unknown frequency {frequency!r}; expected one of {FREQUENCIES}")
    return keys, labels, {k: i for i, k in enumerate(keys)}, keyfn


def aggregate_period(panel, frequency):
    """Aggregate daily bars into per-period records on the global grid.

    ``r`` is the return between the closing prices of consecutive
    periods; for a period whose predecessor has no close (listing, or
    resumption after an untraded period) the within-period return from
    the period's first close is used, so partial periods stay valid.
    ``v`` is the sum of daily turnover within the period. Periods with
    no bars are invalid (NaN).
    """
    if not panel:
        raise ContractError("empty panel")
    keys, labels, index, keyfn = _period_grid(panel, frequency)
    tickers = sorted(panel)
    n_p, n_t = len(keys), len(tickers)
    r = np.full((n_p, n_t), np.nan)
    v = np.full((n_p, n_t), np.nan)
    valid = np.zeros((n_p, n_t), dtype=bool)

    for col, ticker in enumerate(tickers):
        first_close = np.full(n_p, np.nan)
        last_close = np.full(n_p, np.nan)
        for bar in panel[ticker]:
            t = index[keyfn(bar.date)]
            if np.isnan(first_close[t]):
                first_close[t] = bar.close_adj
                v[t, col] = 0.0
            last_close[t] = bar.close_adj
            v[t, col] += bar.turnover_rate
        prev_close = np.nan
        for t in range(n_p):
            if np.isnan(last_close[t]):
                prev_close = np.nan
                continue
            base = prev_close if not np.isnan(prev_close) else first_close[t]
            r[t, col] = (last_close[t] - base) / base
            valid[t, col] = True
            prev_close = last_close[t]

    return PeriodPanel(frequency, labels, tickers, r, v, valid)


# -- windows and cross-sections -------------------------------------------------

def build_windows(periods, t):
    """One window per ticker holding 20 consecutive valid records ending
    at period ``t``; tickers with any invalid record in that span are
    omitted. Returns [] when ``t`` is too early."""
    if t < WINDOW - 1 or t >= periods.n_periods:
        return []
    lo = t - WINDOW + 1
    span_valid = periods.valid[lo:t + 1].all(axis=0)
    windows = []
    for col in np.flatnonzero(span_valid):
        matrix = np.column_stack((periods.r[lo:t + 1, col], periods.v[lo:t + 1, col]))
        windows.append(FeatureWindow(periods.tickers[col], t, np.ascontiguousarray(matrix)))
    return windows


def normalize_cross_section(section):
    """Z-score each (time-step, feature) slice across the section's stocks.

    Population standard deviation; a slice where all stocks share one
    value maps to 0. Returns a new normalized section.
    """
    if len(section.windows) < 2:
        raise DegenerateSectionError(
            f"cross-section at t={section.decision_time} has {len(section.windows)} stock(s); "
            "need at least 2")
    stack = section.stacked()
    mu = stack.mean(axis=0)
    sd = stack.std(axis=0)
    safe = sd > 0.0
    normalized = np.where(safe, (stack - mu) / np.where(safe, sd, 1.0), 0.0)
    windows = [
        FeatureWindow(w.ticker, w.decision_time, np.ascontiguousarray(normalized[i]))
        for i, w in enumerate(section.windows)
    ]
    return CrossSection(section.decision_time, windows, normalized=True)


def build_sections(periods, times, normalize=True):
    """Cross-sections for the given decision times, skipping empty ones."""
    sections = []
    for t in times:
        windows = build_windows(periods, t)
        if not windows:
            continue
        section = CrossSection(t, windows)
        sections.append(normalize_cross_section(section) if normalize else section)
    return sections


def next_returns(periods, t):
    """Realized returns of period ``t`` keyed by ticker (valid records only)."""
    if t < 0 or t >= periods.n_periods:
        return {}
    out = {}
    for col in np.flatnonzero(periods.valid[t]):
        out[periods.tickers[col]] = float(periods.r[t, col])
    return out


# -- period store ---------------------------------------------------------------

PERIODS_HEADER = "ticker,period_index,period_label,r,v,valid"


def write_periods_csv(path, periods):
    """Persist the aggregated period panel (one row per ticker x period)."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(PERIODS_HEADER + "\n")
        for col, ticker in enumerate(periods.tickers):
            for t, label in enumerate(periods.labels):
                fh.write(f"{ticker},{t},{label},{periods.r[t, col]:.17g},"
                         f"{periods.v[t, col]:.17g},{int(periods.valid[t, col])}\n")


def read_periods_csv(path, frequency):
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().strip()
        if header != PERIODS_HEADER:
            raise ParseError(f"unexpected period store header: {header}")
        rows = [line.rstrip("\n").split(",") for line in fh if line.strip()]
    if not rows:
        raise DataError(f"period store {path} is empty")
    tickers = sorted({row[0] for row in rows})
    n_periods = max(int(row[1]) for row in rows) + 1
    labels = [""] * n_periods
    col = {t: i for i, t in enumerate(tickers)}
    r = np.full((n_periods, len(tickers)), np.nan)
    v = np.full((n_periods, len(tickers)), np.nan)
    valid = np.zeros((n_periods, len(tickers)), dtype=bool)
    for ticker, t_str, label, r_str, v_str, valid_str in rows:
        t = int(t_str)
        labels[t] = label
        i = col[ticker]
        r[t, i] = float(r_str)
        v[t, i] = float(v_str)
        valid[t, i] = valid_str == "1"
    return PeriodPanel(frequency, labels, tickers, r, v, valid)
