"""Risk and performance metrics over per-period return series.

Conventions, fixed here once: annual return compounds geometrically;
Sharpe/Sortino/alpha annualize the arithmetic per-period mean (mean *
periods/year) so a series earning exactly the risk-free rate per period
scores zero; standard deviations use the sample (T-1) convention except
the Sortino downside deviation, which is the root mean square of
negative excess returns over all T periods; VaR is historical
simulation, reported as the empirical 99% quantile of per-period losses
(inf definition: the smallest loss bound exceeded with probability at
most 1%).
"""

import warnings
from dataclasses import dataclass

import numpy as np

from . import kernels
from .errors import ContractError, UndefinedMetricError

PERIODS_PER_YEAR = {"daily": 252, "weekly": 52, "monthly": 12}

VAR_LEVEL = 0.01
VAR_MIN_OBS = 100


@dataclass
class ReturnSeries:
    """Aligned portfolio and benchmark per-period simple returns."""

    portfolio: np.ndarray
    benchmark: np.ndarray
    periods_per_year: int
    risk_free_rate: float = 0.0  # annualized

    def __post_init__(self):
        self.portfolio = np.asarray(self.portfolio, dtype=np.float64)
        self.benchmark = (None if self.benchmark is None
                          else np.asarray(self.benchmark, dtype=np.float64))
        if self.portfolio.size == 0:
            raise ContractError("empty return series")
        if self.benchmark is not None and self.benchmark.shape != self.portfolio.shape:
            raise ContractError("portfolio and benchmark lengths differ")
        if (self.portfolio <= -1.0).any():
            raise ContractError("returns must be > -1")


@dataclass
class MetricsReport:
    AR: float
    AER: float
    TR: float
    WR: float
    SR: float
    Alpha: float
    Beta: float
    MD: float
    Sigma: float
    Sortino: float
    VaR99: float

    def to_dict(self):
        return {
            "AR": self.AR, "AER": self.AER, "TR": self.TR, "WR": self.WR,
            "SR": self.SR, "Alpha": self.Alpha, "Beta": self.Beta, "MD": self.MD,
            "Sigma": self.Sigma, "Sortino": self.Sortino, "VaR99": self.VaR99,
        }


def annualized_return(returns, periods_per_year):
    """Geometric annualization of the compounded series return."""
    arr = np.asarray(returns, dtype=np.float64)
    if arr.size == 0:
        raise ContractError("empty return series")
    growth = np.prod(1.0 + arr)
    return float(growth ** (periods_per_year / arr.size) - 1.0)


def annual_excess_return(series):
    return (annualized_return(series.portfolio, series.periods_per_year)
            - annualized_return(series.benchmark, series.periods_per_year))


def _annual_mean(returns, periods_per_year):
    return float(np.mean(returns)) * periods_per_year


def _sample_std(values):
    # identical values have exactly zero spread; np.std leaves float residue
    if values.size < 2 or np.ptp(values) == 0.0:
        return 0.0
    return float(np.std(values, ddof=1))


def sharpe(series):
    sd = _sample_std(series.portfolio)
    if sd == 0.0:
        raise UndefinedMetricError("zero return variance")
    ann_mean = _annual_mean(series.portfolio, series.periods_per_year)
    ann_sd = sd * np.sqrt(series.periods_per_year)
    return (ann_mean - series.risk_free_rate) / ann_sd


def alpha_beta(series):
    """CAPM regression coefficients against the benchmark series."""
    if series.benchmark is None:
        raise ContractError("alpha/beta need a benchmark series")
    p, m = series.portfolio, series.benchmark
    if p.size < 2:
        raise ContractError("need at least 2 observations")
    sd_m = _sample_std(m)
    if sd_m == 0.0:
        raise UndefinedMetricError("zero benchmark variance")
    var_m = sd_m * sd_m
    cov = float(np.cov(p, m, ddof=1)[0, 1])
    beta = cov / var_m
    rp = _annual_mean(p, series.periods_per_year)
    rm = _annual_mean(m, series.periods_per_year)
    alpha = (rp - series.risk_free_rate) - beta * (rm - series.risk_free_rate)
    return alpha, beta


def turnover(weights_history):
    """Half-L1 distance between consecutive weight snapshots.

    Snapshots are mappings ticker -> weight (missing = 0). Returns the
    per-rebalance series and its mean.
    """
    if len(weights_history) < 2:
        raise ContractError("need at least 2 weight snapshots")
    series = []
    for prev, curr in zip(weights_history, weights_history[1:]):
        tickers = sorted(set(prev) | set(curr))
        series.append(0.5 * sum(abs(curr.get(t, 0.0) - prev.get(t, 0.0)) for t in tickers))
    return np.array(series), float(np.mean(series))


def win_rate(returns):
    arr = np.asarray(returns, dtype=np.float64)
    if arr.size == 0:
        raise ContractError("empty return series")
    return float(np.count_nonzero(arr > 0.0)) / arr.size


def max_drawdown(values):
    """Worst peak-to-trough decline as a fraction of the running peak."""
    arr = np.ascontiguousarray(values, dtype=np.float64)
    if arr.size == 0:
        raise ContractError("empty equity series")
    if (arr <= 0.0).any():
        raise ContractError("equity values must be positive")
    return float(kernels.max_drawdown_scan(arr))


def sortino(series):
    rf_per_period = series.risk_free_rate / series.periods_per_year
    excess = series.portfolio - rf_per_period
    downside = np.minimum(excess, 0.0)
    if not (downside < 0.0).any():
        raise UndefinedMetricError("no returns below the risk-free rate")
    dd = np.sqrt(np.mean(downside * downside)) * np.sqrt(series.periods_per_year)
    ann_mean = _annual_mean(series.portfolio, series.periods_per_year)
    return (ann_mean - series.risk_free_rate) / dd


def var_99(returns, method="historical"):
    """99% value at risk of the per-period loss distribution.

    Historical simulation takes the smallest observed loss bound whose
    exceedance frequency is at most 1%; the parametric variant assumes
    normal losses (mean + 2.326 sigma).
    """
    arr = np.asarray(returns, dtype=np.float64)
    if arr.size == 0:
        raise ContractError("empty return series")
    if arr.size < VAR_MIN_OBS:
        warnings.warn(f"VaR99 on only {arr.size} observations is noisy", stacklevel=2)
    losses = -arr
    if method == "historical":
        order = np.sort(losses)
        k = int(np.ceil((1.0 - VAR_LEVEL) * losses.size))
        return float(order[k - 1])
    if method == "parametric":
        z_99 = 2.3263478740408408  # standard normal 99% quantile
        return float(losses.mean() + z_99 * losses.std(ddof=1))
    raise ContractError(f"unknown VaR method {method!r}")


def volatility(returns, periods_per_year):
    arr = np.asarray(returns, dtype=np.float64)
    if arr.size < 2:
        raise ContractError("need at least 2 observations")
    return _sample_std(arr) * float(np.sqrt(periods_per_year))


def compute_report(portfolio_returns, benchmark_returns, equity_values,
                   turnovers, periods_per_year, risk_free_rate):
    """Assemble the full ten-metric report.

    Metrics that are undefined for the realized series (zero variance,
    no losing periods) are reported as None rather than aborting the
    report.
    """
    series = ReturnSeries(portfolio_returns, benchmark_returns,
                          periods_per_year, risk_free_rate)

    def guarded(fn):
        try:
            return fn()
        except UndefinedMetricError:
            return None

    alpha_and_beta = guarded(lambda: alpha_beta(series))
    return MetricsReport(
        AR=annualized_return(series.portfolio, periods_per_year),
        AER=annual_excess_return(series),
        TR=float(np.mean(turnovers)),
        WR=win_rate(series.portfolio),
        SR=guarded(lambda: sharpe(series)),
        Alpha=None if alpha_and_beta is None else alpha_and_beta[0],
        Beta=None if alpha_and_beta is None else alpha_and_beta[1],
        MD=max_drawdown(equity_values),
        Sigma=volatility(series.portfolio, periods_per_year),
        Sortino=guarded(lambda: sortino(series)),
        VaR99=var_99(series.portfolio),
    )
