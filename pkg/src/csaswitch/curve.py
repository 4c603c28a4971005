"""Discount curve bootstrap and interrogation.

The engine prices everything off a single discount curve built from a
snapshot of EUR money-market deposits (sub-1y) and annual-fixed par swap
quotes (2y..30y), EUR-quoted mid rates as of 2012-06-15.

Two build modes are supported:

* quoted discount factors taken as authoritative when present
  (``use_quoted_dfs=True``), with rates kept for cross-checking;
* a plain bootstrap from rates only: simple compounding for
  money-market pillars, annual 30/360 fixed legs for swap pillars with
  linear interpolation of par rates across missing integer years.

Interpolation between pillars is log-linear in the discount factor
(piecewise-constant instantaneous forwards). Extrapolation past the last
pillar is refused.
"""

from __future__ import annotations

import csv
import re
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.optimize import brentq

MONEY_MARKET = "money-market"
PAR_SWAP = "par-swap"

_LABEL_RE = re.compile(r"^\s*(\d+)\s*([my])\s*$", re.IGNORECASE)


def maturity_from_label(label: str) -> float:
    """'3m' -> 0.25, '10y' -> 10.0 (30/360-style month fractions)."""
    m = _LABEL_RE.match(label)
    if m is None:
        raise ValueError(f"cannot parse maturity label {label!r}")
    n, unit = int(m.group(1)), m.group(2).lower()
    return n / 12.0 if unit == "m" else float(n)


@dataclass(frozen=True)
class MarketQuote:
    """One curve input pillar: a deposit rate or an annual par swap rate."""

    maturity: float  # years
    kind: str  # MONEY_MARKET or PAR_SWAP
    rate: float  # decimal per annum
    df: float | None = None  # quoted discount factor, if the source supplies one
    label: str = ""

    def __post_init__(self):
        if self.maturity <= 0:
            raise ValueError(f"maturity must be positive, got {self.maturity}")
        if self.kind not in (MONEY_MARKET, PAR_SWAP):
            raise ValueError(f"unknown quote kind {self.kind!r}")
        if not np.isfinite(self.rate):
            raise ValueError("rate must be finite")
        if self.kind == PAR_SWAP and abs(self.maturity - round(self.maturity)) > 1e-9:
            raise ValueError("par-swap pillars must have integer-year maturities")
        if self.df is not None and self.df <= 0:
            raise ValueError(f"quoted discount factor must be positive, got {self.df}")


class YieldCurve:
    """Discount factors on a strictly increasing pillar grid, df(0) = 1.

    Monotonicity of df in t is deliberately not required: the source
    snapshot is mildly non-monotone at the 1y/2y junction.
    """

    def __init__(self, times, dfs):
        times = np.asarray(times, dtype=float)
        dfs = np.asarray(dfs, dtype=float)
        if times.ndim != 1 or times.shape != dfs.shape or times.size == 0:
            raise ValueError("times and dfs must be matching non-empty 1-d arrays")
        if times[0] <= 0 or np.any(np.diff(times) <= 0):
            raise ValueError("pillar times must be strictly increasing and positive")
        if np.any(dfs <= 0) or not np.all(np.isfinite(dfs)):
            raise ValueError("discount factors must be positive and finite")
        self.times = times
        self.dfs = dfs
        self._log_dfs = np.log(dfs)

    @property
    def max_time(self) -> float:
        return float(self.times[-1])

    def discount_factor(self, t):
        """Log-linear interpolation in ln(df); exact at pillars, df(0) = 1."""
        t = np.asarray(t, dtype=float)
        if np.any(t < 0) or np.any(t > self.max_time + 1e-12):
            raise ValueError(
                f"t outside curve domain [0, {self.max_time}]: extrapolation refused"
            )
        # np.interp with a synthetic (0, ln 1 = 0) anchor handles t below the
        # first pillar.
        xp = np.concatenate(([0.0], self.times))
        fp = np.concatenate(([0.0], self._log_dfs))
        out = np.exp(np.interp(np.clip(t, 0.0, self.max_time), xp, fp))
        return float(out) if out.ndim == 0 else out

    def zero_rate(self, t):
        t = np.asarray(t, dtype=float)
        return -np.log(self.discount_factor(t)) / np.where(t > 0, t, 1.0)

    def instantaneous_forward(self, t, h=1e-4):
        """f(0,t) = -d ln df / dt by central finite difference.

        Piecewise-linear ln(df) makes this a step function of t; the
        difference stencil is clamped inside the curve domain.
        """
        t = np.asarray(t, dtype=float)
        lo = np.clip(t - h, 0.0, self.max_time)
        hi = np.clip(t + h, 0.0, self.max_time)
        dlog = np.log(self.discount_factor(hi)) - np.log(self.discount_factor(lo))
        out = -dlog / (hi - lo)
        return float(out) if out.ndim == 0 else out


def _bootstrap_swap_pillars(quoted, mm_times, mm_dfs):
    """Annual-fixed-leg bootstrap of swap pillars; returns (times, dfs).

    ``quoted`` is a list of (maturity_years:int, par_rate). Par rates for
    missing integer years are linearly interpolated in maturity. The 1y
    annuity point is taken from the money-market segment when it reaches
    1y, otherwise solved jointly with the first swap pillar under
    log-linear interpolation between the last deposit pillar and that
    swap pillar.
    """
    quoted = sorted(quoted)
    first_year = quoted[0][0]
    last_year = quoted[-1][0]
    mats = [m for m, _ in quoted]
    rates = [r for _, r in quoted]
    par = {n: float(np.interp(n, mats, rates)) for n in range(first_year, last_year + 1)}

    known_t = list(mm_times)
    known_df = list(mm_dfs)

    def df_at(t):
        xp = np.concatenate(([0.0], np.asarray(known_t)))
        fp = np.concatenate(([0.0], np.log(known_df)))
        return float(np.exp(np.interp(t, xp, fp)))

    year_df = {}
    have_1y = known_t and known_t[-1] >= 1.0 - 1e-12
    if have_1y:
        year_df[1] = df_at(1.0)
    else:
        if first_year < 2:
            raise ValueError("cannot bootstrap a 1y par swap without a 1y anchor")
        # Solve df(first swap pillar) so that the par equation holds with the
        # interior annual dates log-linearly interpolated between the last
        # deposit pillar and the pillar being solved.
        n0 = first_year
        t_mm = known_t[-1]
        ldf_mm = np.log(known_df[-1])

        def gap(df_n):
            w = (np.arange(1, n0) - t_mm) / (n0 - t_mm)
            interior = np.exp(ldf_mm + w * (np.log(df_n) - ldf_mm))
            annuity = interior.sum() + df_n
            return par[n0] * annuity - (1.0 - df_n)

        df_n0 = brentq(gap, 1e-8, 2.0, xtol=1e-15)
        w = (np.arange(1, n0) - t_mm) / (n0 - t_mm)
        for j, dfj in zip(range(1, n0), np.exp(ldf_mm + w * (np.log(df_n0) - ldf_mm))):
            year_df[j] = float(dfj)
        year_df[n0] = float(df_n0)

    start = max(year_df) + 1
    for n in range(start, last_year + 1):
        annuity = sum(year_df[j] for j in range(1, n))
        df_n = (1.0 - par[n] * annuity) / (1.0 + par[n])
        if df_n <= 0:
            raise ValueError(f"par rate at {n}y implies non-positive discount factor")
        year_df[n] = df_n

    years = sorted(year_df)
    return [float(n) for n in years], [year_df[n] for n in years]


def build_curve(quotes, use_quoted_dfs: bool = True) -> YieldCurve:
    """Build a YieldCurve from sorted quotes.

    With ``use_quoted_dfs`` every pillar that carries a quoted df uses it
    verbatim (the snapshot's own column is authoritative); otherwise all
    pillars are bootstrapped from rates.
    """
    if not quotes:
        raise ValueError("at least one quote is required")
    mats = [q.maturity for q in quotes]
    if any(b - a <= 0 for a, b in zip(mats, mats[1:])):
        raise ValueError("quote maturities must be strictly increasing")

    if use_quoted_dfs and all(q.df is not None for q in quotes):
        return YieldCurve(mats, [q.df for q in quotes])

    mm = [q for q in quotes if q.kind == MONEY_MARKET]
    swaps = [q for q in quotes if q.kind == PAR_SWAP]
    if swaps and mm and mm[-1].maturity >= swaps[0].maturity:
        raise ValueError("money-market pillars must precede swap pillars")

    times, dfs = [], []
    for q in mm:
        if use_quoted_dfs and q.df is not None:
            df = q.df
        else:
            denom = 1.0 + q.rate * q.maturity
            if denom <= 0:
                raise ValueError(f"deposit rate {q.rate} at {q.maturity}y implies df <= 0")
            df = 1.0 / denom
        times.append(q.maturity)
        dfs.append(df)

    if swaps:
        s_times, s_dfs = _bootstrap_swap_pillars(
            [(int(round(q.maturity)), q.rate) for q in swaps], times, dfs
        )
        for t, df in zip(s_times, s_dfs):
            if t > (times[-1] if times else 0.0) + 1e-12:
                times.append(t)
                dfs.append(df)

    return YieldCurve(times, dfs)


def par_swap_rate(curve: YieldCurve, maturity: float, fixed_freq: int = 1) -> float:
    """Fixed rate that zeroes the swap NPV: (df(0) - df(T)) / fixed annuity."""
    n = maturity * fixed_freq
    if abs(n - round(n)) > 1e-9:
        raise ValueError("maturity must be a multiple of the fixed period")
    n = int(round(n))
    if n < 1:
        raise ValueError("maturity must cover at least one fixed period")
    pay_times = np.arange(1, n + 1) / fixed_freq
    tau = 1.0 / fixed_freq
    annuity = tau * curve.discount_factor(pay_times).sum()
    return (1.0 - curve.discount_factor(maturity)) / annuity


def load_quotes_csv(path) -> list[MarketQuote]:
    """Read quotes from a CSV with columns maturity_label,kind,rate[,df]."""
    quotes = []
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            df_str = (row.get("df") or "").strip()
            quotes.append(
                MarketQuote(
                    maturity=maturity_from_label(row["maturity_label"]),
                    kind=row["kind"].strip(),
                    rate=float(row["rate"]),
                    df=float(df_str) if df_str else None,
                    label=row["maturity_label"].strip(),
                )
            )
    return quotes


def bundled_market_quotes() -> list[MarketQuote]:
    """The packaged 2012-06-15 EUR market snapshot (15 pillars)."""
    return load_quotes_csv(Path(__file__).parent / "data" / "market_quotes.csv")


def engine_curve_quotes(quotes=None) -> list[MarketQuote]:
    """Quote subset for the pricing curve: deposits below 1y plus all swaps.

    The swap segment starts at 2y, so the 1y point is left to
    interpolation against the swap curve rather than pinned to the 1y
    deposit (which trades on a different basis); this keeps the 1y par
    swap rate consistent with the swap segment.
    """
    quotes = bundled_market_quotes() if quotes is None else quotes
    return [
        q
        for q in quotes
        if q.kind == PAR_SWAP or (q.kind == MONEY_MARKET and q.maturity < 1.0 - 1e-12)
    ]
