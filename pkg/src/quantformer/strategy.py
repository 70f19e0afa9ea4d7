"""Quantile-selection trading strategy and portfolio accounting.

Each period the model scores every stock in the cross-section; stocks
are ranked by the first component of the predicted distribution (the
probability of landing in the lowest-return band) through the same
empirical-quantile binning used for labels. A 0/1 selection vector over
the bands picks which quantile groups to hold, selected stocks are
equal-weighted, and the portfolio value is rolled forward with
transaction costs charged on total traded notional (buys plus sells)
against post-drift weights. No short selling: weights are nonnegative
and sum to 1 (fully invested) or 0 (all cash when nothing qualifies).

One degenerate path worth knowing: if the model emits the same
distribution for every stock, all quantile ranks collapse to 1 and every
stock lands in the last band -- a selection vector not covering that
band then holds cash for the period.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import BacktestGapError, ConfigError, ContractError
from .labeling import band_index, quantile_ranks


@dataclass(frozen=True)
class StrategyConfig:
    """Band-selection indicator, fee and cash settings.

    ``selection`` is the 0/1 vector over quantile bands (its popcount is
    the decision factor b, constrained to 1 <= b < bands). With
    ``require_persistence`` a stock must be selected in two consecutive
    periods before it is held; the first period has no predecessor and
    trades on the current selection alone.
    """

    selection: tuple
    fee_rate: float = 0.003
    initial_cash: float = 1_000_000.0
    require_persistence: bool = False

    def __post_init__(self):
        sel = tuple(int(s) for s in self.selection)
        if any(s not in (0, 1) for s in sel):
            raise ConfigError(f"selection must be 0/1 entries, got {self.selection}")
        b = sum(sel)
        if not 1 <= b < len(sel):
            raise ConfigError(
                f"selected group count must satisfy 1 <= b < bands, got b={b} of {len(sel)}")
        if self.fee_rate < 0:
            raise ConfigError(f"fee_rate must be >= 0, got {self.fee_rate}")
        if self.initial_cash <= 0:
            raise ConfigError(f"initial_cash must be > 0, got {self.initial_cash}")
        object.__setattr__(self, "selection", sel)

    @property
    def b(self):
        return sum(self.selection)


@dataclass
class PortfolioState:
    period: int
    value: float
    weights: dict  # ticker -> weight, nonzero entries only
    ruin: bool = False


@dataclass
class EquityCurve:
    """Post-rebalance equity snapshots plus a final settlement row.

    Row j <= K is taken at the close of decision period t_j right after
    rebalancing; the last row is the close of the final traded period.
    ``weights_history[0]`` is the all-cash start, then one target-weight
    snapshot per decision.
    """

    timestamps: list = field(default_factory=list)
    values: list = field(default_factory=list)
    period_returns: list = field(default_factory=list)
    turnovers: list = field(default_factory=list)
    weights_history: list = field(default_factory=list)
    ruined: bool = False


def sort_label(predictions, scheme):
    """Band one-hot per stock from the ranked first-component scores.

    ``predictions`` is (N, bands); ranking uses the empirical quantile
    CDF of column 0 (ties share the rank, so identical predictions all
    land in the top band)."""
    preds = np.asarray(predictions, dtype=np.float64)
    if preds.ndim != 2 or preds.shape[0] == 0:
        raise ContractError(f"expected a nonempty (N, bands) array, got {preds.shape}")
    psis = quantile_ranks(preds[:, 0])
    out = np.zeros((preds.shape[0], scheme.bins))
    for row, psi in enumerate(psis):
        i = band_index(psi, scheme)
        if i > 0:
            out[row, i - 1] = 1.0
    return out


def compute_weights(sorted_prev, sorted_curr, config):
    """Equal weights over selected stocks; zeros when none qualify.

    ``sorted_prev``/``sorted_curr`` are (N, bands) band indicators
    aligned on the same stock order; ``sorted_prev`` may be None on the
    first period (or when persistence is off)."""
    phi = np.asarray(config.selection, dtype=np.float64)
    curr = np.asarray(sorted_curr, dtype=np.float64)
    selected = curr @ phi
    if config.require_persistence and sorted_prev is not None:
        selected = selected * (np.asarray(sorted_prev, dtype=np.float64) @ phi)
    total = selected.sum()
    if total == 0.0:
        return np.zeros(len(curr))
    return selected / total


def step_portfolio(state, new_weights, realized, fee_rate):
    """Roll value over one period, then rebalance into ``new_weights``.

    Held positions earn their realized returns (cash earns zero), the
    held weights drift with those returns, and the rebalancing fee is
    ``fee_rate`` times total traded notional versus the drifted book.
    ``realized`` must price every held ticker.
    """
    value = state.value
    drifted = {}
    if state.weights:
        gross = 1.0
        for ticker, w in state.weights.items():
            if ticker not in realized:
                raise BacktestGapError(state.period, f"no realized return for held {ticker}")
            r = realized[ticker]
            if r <= -1.0:
                raise ContractError(f"return {r} <= -1 for {ticker}")
            gross += w * r
        value *= gross
        drifted = {t: w * (1.0 + realized[t]) / gross for t, w in state.weights.items()}

    traded = 0.0
    for ticker in sorted(set(drifted) | set(new_weights)):
        traded += abs(new_weights.get(ticker, 0.0) - drifted.get(ticker, 0.0))
    value -= fee_rate * traded * value

    return PortfolioState(period=state.period + 1, value=value,
                          weights=dict(new_weights), ruin=value <= 0.0)


def _turnover(curr, prev):
    tickers = sorted(set(curr) | set(prev))
    return 0.5 * sum(abs(curr.get(t, 0.0) - prev.get(t, 0.0)) for t in tickers)


def _run_loop(weight_fn, sections, realized_next, labels, initial_cash, fee_rate):
    """Shared accounting loop; ``weight_fn(section) -> {ticker: weight}``."""
    if not sections:
        raise ContractError("no cross-sections to trade")
    times = [s.decision_time for s in sections]
    for prev_t, cur_t in zip(times, times[1:]):
        if cur_t != prev_t + 1:
            raise BacktestGapError(prev_t + 1, "missing cross-section")
    for t in times:
        if t not in realized_next:
            raise BacktestGapError(t, "missing realized next-period returns")

    curve = EquityCurve()
    curve.weights_history.append({})
    state = PortfolioState(period=times[0], value=initial_cash, weights={})
    prev_value = initial_cash

    for k, section in enumerate(sections):
        t = section.decision_time
        realized = {} if k == 0 else realized_next[times[k - 1]]
        target = weight_fn(section)
        state = step_portfolio(state, target, realized, fee_rate)
        curve.timestamps.append(labels[t])
        curve.values.append(state.value)
        curve.period_returns.append(state.value / prev_value - 1.0)
        curve.turnovers.append(_turnover(target, curve.weights_history[-1]))
        curve.weights_history.append(dict(target))
        prev_value = state.value
        if state.ruin:
            curve.ruined = True
            return curve

    final = step_portfolio(state, state.weights, realized_next[times[-1]], 0.0)
    curve.timestamps.append(labels[times[-1] + 1])
    curve.values.append(final.value)
    curve.period_returns.append(final.value / prev_value - 1.0)
    curve.turnovers.append(0.0)
    curve.ruined = final.ruin
    return curve


def run_backtest(predict_fn, sections, realized_next, scheme, config, labels):
    """Predict -> sort -> weight -> account, over consecutive sections.

    ``predict_fn(section)`` returns the (N, bands) prediction matrix for
    the section's stocks; ``realized_next[t]`` maps ticker to the return
    of period t+1; ``labels`` maps period index to a display timestamp.
    The first section's windows must already carry the full 20-period
    lookback (build_windows guarantees this).
    """
    prev_rows = {"map": None}

    def weigh(section):
        sorted_now = sort_label(predict_fn(section), scheme)
        aligned_prev = None
        if config.require_persistence and prev_rows["map"] is not None:
            aligned_prev = np.stack([
                prev_rows["map"].get(t, np.zeros(scheme.bins)) for t in section.tickers])
        weights = compute_weights(aligned_prev, sorted_now, config)
        prev_rows["map"] = {t: sorted_now[i] for i, t in enumerate(section.tickers)}
        return {t: w for t, w in zip(section.tickers, weights) if w > 0.0}

    return _run_loop(weigh, sections, realized_next, labels,
                     config.initial_cash, config.fee_rate)


def run_equal_weight(sections, realized_next, labels, initial_cash=1_000_000.0):
    """Fee-free uniform-weight benchmark over the same sections."""

    def weigh(section):
        n = len(section.windows)
        return {t: 1.0 / n for t in section.tickers}

    return _run_loop(weigh, sections, realized_next, labels, initial_cash, 0.0)


# -- artifact emission ----------------------------------------------------------

def write_equity_csv(path, curve):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("timestamp,value,period_return,turnover\n")
        for ts, v, r, tr in zip(curve.timestamps, curve.values,
                                curve.period_returns, curve.turnovers):
            fh.write(f"{ts},{v:.17g},{r:.17g},{tr:.17g}\n")


def read_equity_csv(path):
    curve = EquityCurve()
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().strip()
        if header != "timestamp,value,period_return,turnover":
            raise ContractError(f"unexpected equity CSV header: {header}")
        for line in fh:
            ts, v, r, tr = line.strip().split(",")
            curve.timestamps.append(ts)
            curve.values.append(float(v))
            curve.period_returns.append(float(r))
            curve.turnovers.append(float(tr))
    return curve


def write_weights_csv(path, curve):
    """Long-format target-weight history (skips the all-cash start row)."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("timestamp,ticker,weight\n")
        for ts, snapshot in zip(curve.timestamps, curve.weights_history[1:]):
            for ticker in sorted(snapshot):
                fh.write(f"{ts},{ticker},{snapshot[ticker]:.17g}\n")
