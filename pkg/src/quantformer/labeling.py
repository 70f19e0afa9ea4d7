"""Quantile one-hot labels over cross-sections of next-period returns.

Stocks are ranked by the empirical quantile CDF of their next-period
return within the section. The unit interval is tiled with ``bins``
quantile bands of width ``fraction`` separated by gaps of width ``xi``;
a stock falling inside band ``i`` gets the i-th one-hot vector, a stock
in a gap gets the all-zero vector ("null label"). Bands are closed on
the right, so with N distinct returns and fraction = k/N each band holds
exactly fraction*N stocks and the top stock always lands in the last
band.
"""

from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .errors import ConfigError, ContractError


def _exact(fraction):
    """The band fraction as an exact rational of its decimal rendering.

    Band edges sit on values like k/N that users write in decimal;
    naive float products (0.2*3) land one ulp off and misfile the stocks
    sitting exactly on an edge, so all edge arithmetic is done in
    rationals and rounded to float once.
    """
    return Fraction(str(float(fraction)))


_GAP_SNAP = Fraction(1, 10 ** 12)


def _exact_gap(bins, fraction):
    covered = _exact(fraction) * bins
    if covered > 1:
        raise ConfigError(
            f"fraction*bins = {float(covered)} exceeds 1; bands cannot tile the unit interval")
    gap = (1 - covered) / (bins - 1)
    # a gap below float resolution means the user wrote something like 1/3
    # that is meant to tile exactly
    return gap if gap >= _GAP_SNAP else Fraction(0)


def boundary_term(bins, fraction):
    """Gap width between consecutive quantile bands."""
    if bins < 2:
        raise ConfigError(f"need at least 2 bins, got {bins}")
    if fraction <= 0:
        raise ConfigError(f"fraction must be positive, got {fraction}")
    return float(_exact_gap(bins, fraction))


@dataclass(frozen=True)
class LabelScheme:
    """Band count, per-band fraction and null handling for labeling.

    ``bands`` holds the per-band (lower, upper] edges, precomputed in
    exact rational arithmetic.
    """

    bins: int
    fraction: float
    include_null: bool = False
    xi: float = field(init=False)
    bands: tuple = field(init=False)

    def __post_init__(self):
        if self.bins < 3:
            raise ConfigError(f"bin count must be >= 3, got {self.bins}")
        object.__setattr__(self, "xi", boundary_term(self.bins, self.fraction))
        frac = _exact(self.fraction)
        gap = _exact_gap(self.bins, self.fraction)
        bands = tuple(
            (float((i - 1) * (frac + gap)), float(i * frac + (i - 1) * gap))
            for i in range(1, self.bins + 1))
        object.__setattr__(self, "bands", bands)


@dataclass(frozen=True)
class LabeledSample:
    ticker: str
    decision_time: int
    features: object  # normalized FeatureWindow
    target: np.ndarray  # 0/1 vector of length bins, possibly all-zero
    next_return: float


def empirical_quantile(returns, r_n):
    """Fraction of the section with return <= ``r_n`` (ties included)."""
    arr = np.asarray(returns, dtype=np.float64)
    if arr.size == 0:
        raise ContractError("empty return list")
    if not np.any(arr == r_n):
        raise ContractError(f"{r_n} is not a member of the return list")
    return float(np.count_nonzero(arr <= r_n)) / arr.size


def quantile_ranks(returns):
    """Empirical quantile CDF for every element of ``returns`` at once."""
    arr = np.asarray(returns, dtype=np.float64)
    if arr.size == 0:
        raise ContractError("empty return list")
    order = np.sort(arr)
    return np.searchsorted(order, arr, side="right") / arr.size


def band_index(psi, scheme):
    """1-based band for a quantile value, 0 when it falls in a gap.

    Band i covers ((i-1)(fraction+xi), i*fraction + (i-1)*xi].
    """
    if psi <= 0.0 or psi > 1.0:
        raise ContractError(f"quantile value must lie in (0, 1], got {psi}")
    for i, (lo, hi) in enumerate(scheme.bands, start=1):
        if lo < psi <= hi:
            return i
    return 0


def assign_label(psi, scheme):
    """One-hot target for a quantile value; all-zero inside a gap."""
    y = np.zeros(scheme.bins)
    i = band_index(psi, scheme)
    if i > 0:
        y[i - 1] = 1.0
    return y


def build_dataset(sections, returns_by_time, scheme):
    """Labeled samples from normalized sections plus next-period returns.

    ``returns_by_time[t]`` maps ticker -> realized return of period t+1
    for the section at decision time t. Windowed tickers missing their
    next return are dropped and counted. With ``include_null`` False,
    gap-band samples are dropped as well; otherwise they are kept with
    all-zero targets.

    Returns (samples, report) where the report counts sections, samples
    and both kinds of drops.
    """
    samples = []
    dropped_missing = 0
    dropped_null = 0
    for section in sections:
        lookup = returns_by_time.get(section.decision_time, {})
        windows, rets = [], []
        for w in section.windows:
            nxt = lookup.get(w.ticker)
            if nxt is None:
                dropped_missing += 1
                continue
            windows.append(w)
            rets.append(nxt)
        if not windows:
            continue
        psis = quantile_ranks(rets)
        for w, nxt, psi in zip(windows, rets, psis):
            target = assign_label(psi, scheme)
            if not scheme.include_null and not target.any():
                dropped_null += 1
                continue
            samples.append(LabeledSample(w.ticker, section.decision_time, w, target, nxt))
    report = {
        "sections": len(sections),
        "samples": len(samples),
        "dropped_missing_next_return": dropped_missing,
        "dropped_null": dropped_null,
    }
    return samples, report
