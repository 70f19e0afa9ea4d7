"""Seeded synthetic market with a plantable predictive signal.

The planted rule works at the rank level: every stock carries a turnover
level from a fixed evenly spaced grid (levels persist across periods,
with a few random pair swaps per period and light jitter, the way
liquidity persists for real names), and the following period's return
draws are dealt out *by rank* of a score

    score = signal_strength * zscore(turnover) + (1 - signal_strength) * noise.

At signal_strength 1 the rank of the next return equals the rank of the
current turnover exactly, so quantile labels are a deterministic
function of the feature window and an 80%+ hold-out accuracy target is
well-posed; at 0 the labels are pure chance. Level persistence matters:
a mean-pooled encoder without positional encoding only sees the window
as a set, and a persistent level makes "last period's turnover"
inferable from that set. Prices follow the period returns and can be
expanded into daily bars matching the ingestion CSV schema, with
intraperiod paths that compound exactly to the period return.
"""

import csv
from dataclasses import dataclass
from datetime import date, timedelta

import numpy as np

from .errors import ConfigError
from .market_data import (DailyBar, PeriodPanel, _month_label, _week_key, _week_label)

START_YEAR = 2015
RULES = ("turnover_rank",)

TURNOVER_LO, TURNOVER_HI = 0.004, 0.08
TURNOVER_JITTER = 0.002  # relative; far below the grid spacing, so ranks survive
LEVEL_SWAP_FRACTION = 0.1  # stocks trading places on the level grid per period
RETURN_FLOOR = -0.9


@dataclass(frozen=True)
class SyntheticSpec:
    seed: int = 0
    n_stocks: int = 50
    n_periods: int = 120
    frequency: str = "monthly"
    base_volatility: float = 0.04
    mean_return: float = 0.005
    signal_strength: float = 1.0
    rule: str = "turnover_rank"

    def __post_init__(self):
        if self.n_stocks < 2:
            raise ConfigError(f"need at least 2 stocks, got {self.n_stocks}")
        if self.n_periods < 25:
            raise ConfigError(f"need at least 25 periods, got {self.n_periods}")
        if not 0.0 <= self.signal_strength <= 1.0:
            raise ConfigError(f"signal_strength must lie in [0,1], got {self.signal_strength}")
        if self.base_volatility <= 0:
            raise ConfigError("base_volatility must be positive")
        if self.frequency not in ("monthly", "weekly", "daily"):
            raise ConfigError(f"unknown frequency {self.frequency!r}")
        if self.rule not in RULES:
            raise ConfigError(f"unknown signal rule {self.rule!r}")


def tickers_for(spec):
    return [f"S{i:04d}" for i in range(spec.n_stocks)]


def generate_period_values(spec):
    """Period-level (returns, turnovers), both (n_periods, n_stocks).

    Returns for period 0 are zero (no predecessor); for t >= 1 they are
    rank-assigned from the scores of period t-1.
    """
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence((spec.seed, 0))))
    n, t_max = spec.n_stocks, spec.n_periods
    # evenly spaced levels keep the z-score margin between rank neighbours
    # constant, so every quantile edge is equally recoverable
    grid = np.linspace(TURNOVER_LO, TURNOVER_HI, n)
    levels = grid[rng.permutation(n)]
    n_swaps = max(1, int(n * LEVEL_SWAP_FRACTION / 2))

    v = np.empty((t_max, n))
    r = np.zeros((t_max, n))
    s = spec.signal_strength
    for t in range(t_max):
        if t > 0:
            movers = rng.choice(n, size=2 * n_swaps, replace=False)
            for a, b in movers.reshape(-1, 2):
                levels[a], levels[b] = levels[b], levels[a]
        jitter = 1.0 + rng.uniform(-TURNOVER_JITTER, TURNOVER_JITTER, size=n)
        v[t] = levels * jitter
        if t + 1 >= t_max:
            break
        z = (v[t] - v[t].mean()) / v[t].std()
        score = s * z + (1.0 - s) * rng.standard_normal(n)
        draws = np.sort(np.clip(rng.normal(spec.mean_return, spec.base_volatility, n),
                                RETURN_FLOOR, None))
        r[t + 1][np.argsort(score, kind="stable")] = draws
    return r, v


def _period_dates(spec):
    """One list of trading dates (weekdays) per period."""
    if spec.frequency == "monthly":
        periods = []
        for i in range(spec.n_periods):
            y, m = START_YEAR + i // 12, 1 + i % 12
            day, days = date(y, m, 1), []
            while day.month == m:
                if day.isoweekday() <= 5:
                    days.append(day)
                day += timedelta(days=1)
            periods.append(days)
        return periods
    if spec.frequency == "weekly":
        monday = date(START_YEAR, 1, 5)
        return [[monday + timedelta(days=7 * i + d) for d in range(5)]
                for i in range(spec.n_periods)]
    all_days, day = [], date(START_YEAR, 1, 5)
    while len(all_days) < spec.n_periods:
        if day.isoweekday() <= 5:
            all_days.append([day])
        day += timedelta(days=1)
    return all_days


def _period_labels(spec, period_dates):
    if spec.frequency == "monthly":
        return [_month_label((d[0].year, d[0].month)) for d in period_dates]
    if spec.frequency == "weekly":
        return [_week_label(_week_key(d[0])) for d in period_dates]
    return [d[0].isoformat() for d in period_dates]


def generate_period_panel(spec):
    """Period records directly, skipping the daily-bar detour."""
    r, v = generate_period_values(spec)
    labels = _period_labels(spec, _period_dates(spec))
    valid = np.ones(r.shape, dtype=bool)
    return PeriodPanel(spec.frequency, labels, tickers_for(spec), r, v, valid)


def generate_universe(spec):
    """Daily-bar panel whose period aggregation reproduces the planted
    period returns and turnovers (up to float rounding)."""
    r, v = generate_period_values(spec)
    period_dates = _period_dates(spec)
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence((spec.seed, 1))))
    names = tickers_for(spec)

    base_prices = 20.0 + 80.0 * rng.random(spec.n_stocks)
    panel = {name: [] for name in names}
    prev_close = base_prices.copy()
    daily_sigma = spec.base_volatility / np.sqrt(21.0)

    for t, days in enumerate(period_dates):
        n_days = len(days)
        total_log = np.log1p(r[t])
        raw = rng.normal(0.0, daily_sigma, size=(spec.n_stocks, n_days))
        logs = raw - raw.mean(axis=1, keepdims=True) + total_log[:, None] / n_days
        closes = prev_close[:, None] * np.exp(np.cumsum(logs, axis=1))
        shares = rng.random((spec.n_stocks, n_days))
        shares /= shares.sum(axis=1, keepdims=True)
        turnovers = v[t][:, None] * shares
        for i, name in enumerate(names):
            bars = panel[name]
            for j, day in enumerate(days):
                bars.append(DailyBar(name, day, float(closes[i, j]), float(turnovers[i, j])))
        prev_close = closes[:, -1]
    return panel


def write_daily_csv(path, panel):
    """Emit the daily panel in the ingestion CSV schema."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["ticker", "date", "close_adj", "turnover_rate"])
        for ticker in sorted(panel):
            for bar in panel[ticker]:
                writer.writerow([bar.ticker, bar.date.isoformat(),
                                 f"{bar.close_adj:.17g}", f"{bar.turnover_rate:.17g}"])
