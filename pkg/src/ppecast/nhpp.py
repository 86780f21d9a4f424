"""Non-homogeneous Poisson tooling: stationarity testing and rate estimation.

The admission process is tested against the null hypothesis of a Poisson
process with piecewise-constant rate: the horizon is split into
progressively shorter intervals, arrivals inside each interval are mapped
through a log transform whose outputs are i.i.d. standard exponential under
a stationary Poisson process, and a Kolmogorov-Smirnov test is applied per
interval.  The sweep stops at the interval length where at least 90% of
intervals pass.
"""

from __future__ import annotations

import math
from bisect import bisect_left, bisect_right
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np


@dataclass(frozen=True)
class PiecewiseRate:
    """Arrival intensity, constant on each interval, zero outside support."""

    breakpoints: tuple  # strictly increasing, days
    rates: tuple  # len == len(breakpoints) - 1, arrivals/day

    def __post_init__(self):
        if len(self.breakpoints) < 2:
            raise ValueError("need at least two breakpoints")
        if len(self.rates) != len(self.breakpoints) - 1:
            raise ValueError(
                f"{len(self.breakpoints)} breakpoints require "
                f"{len(self.breakpoints) - 1} rates, got {len(self.rates)}"
            )
        if any(b <= a for a, b in zip(self.breakpoints, self.breakpoints[1:])):
            raise ValueError("breakpoints must be strictly increasing")
        if any(r < 0 for r in self.rates):
            raise ValueError("rates must be >= 0")

    @classmethod
    def constant(cls, rate: float, start: float, end: float) -> "PiecewiseRate":
        return cls(breakpoints=(float(start), float(end)), rates=(float(rate),))

    @property
    def support(self) -> tuple:
        return (self.breakpoints[0], self.breakpoints[-1])

    def max_rate(self) -> float:
        return max(self.rates)

    def value_at(self, t: float) -> float:
        if t < self.breakpoints[0] or t >= self.breakpoints[-1]:
            return 0.0
        idx = bisect_right(self.breakpoints, t) - 1
        return self.rates[idx]

    def values_at(self, times) -> np.ndarray:
        times = np.asarray(times, dtype=float)
        edges = np.asarray(self.breakpoints)
        idx = np.clip(np.searchsorted(edges, times, side="right") - 1, 0, len(self.rates) - 1)
        values = np.asarray(self.rates)[idx]
        inside = (times >= edges[0]) & (times < edges[-1])
        return np.where(inside, values, 0.0)

    def scaled(self, factor: float) -> "PiecewiseRate":
        return PiecewiseRate(self.breakpoints, tuple(r * factor for r in self.rates))

    def to_json(self) -> dict:
        return {"breakpoints": list(self.breakpoints), "rates": list(self.rates)}

    @classmethod
    def from_json(cls, obj) -> "PiecewiseRate":
        return cls(
            breakpoints=tuple(float(b) for b in obj["breakpoints"]),
            rates=tuple(float(r) for r in obj["rates"]),
        )


def integrate_rate(rate: PiecewiseRate, a: float, b: float) -> float:
    """Integral of the rate over [a, b]; zero contribution outside support."""
    if a > b:
        raise ValueError(f"integration bounds reversed: [{a}, {b}]")
    total = 0.0
    for i, r in enumerate(rate.rates):
        lo = max(a, rate.breakpoints[i])
        hi = min(b, rate.breakpoints[i + 1])
        if hi > lo:
            total += r * (hi - lo)
    return total


def estimate_piecewise_rate(
    arrival_times: Sequence[float], horizon: tuple, interval_length_days: float
) -> PiecewiseRate:
    """Per-interval arrival counts divided by interval length."""
    if interval_length_days <= 0:
        raise ValueError(f"interval length must be positive, got {interval_length_days}")
    a, b = float(horizon[0]), float(horizon[1])
    if b <= a:
        raise ValueError(f"empty horizon [{a}, {b}]")
    times = sorted(arrival_times)
    breakpoints = [a]
    while breakpoints[-1] + interval_length_days < b:
        breakpoints.append(breakpoints[-1] + interval_length_days)
    breakpoints.append(b)
    rates = []
    last = len(breakpoints) - 2
    for i, (lo, hi) in enumerate(zip(breakpoints, breakpoints[1:])):
        left = bisect_left(times, lo)
        # pieces partition arrivals: [lo, hi) except the last, which is closed
        right = bisect_right(times, hi) if i == last else bisect_left(times, hi)
        rates.append((right - left) / (hi - lo))
    return PiecewiseRate(breakpoints=tuple(breakpoints), rates=tuple(rates))


# ---------------------------------------------------------------------------
# Stationarity testing
# ---------------------------------------------------------------------------


def exp_residuals(arrival_times: Sequence[float], a: float, b: float) -> list:
    """Log-transform arrivals in [a, b] to i.i.d. standard exponentials (H0).

    With sorted arrivals t_1 <= ... <= t_n and t_0 = a, the j-th residual is
    (n + 1 - j) * -log((b - t_j) / (b - t_{j-1})).  Under a stationary
    Poisson process on [a, b] these are independent standard exponential.
    An arrival exactly at b yields an infinite residual, which callers
    report as a degenerate rejection.
    """
    times = sorted(arrival_times)
    if not times:
        raise ValueError("need at least one arrival")
    if times[0] < a or times[-1] > b:
        raise ValueError(f"arrivals must lie within [{a}, {b}]")
    n = len(times)
    residuals = []
    prev = a
    for j, t in enumerate(times, start=1):
        remaining = b - t
        prev_remaining = b - prev
        if remaining <= 0.0:
            residuals.append(math.inf)
        else:
            residuals.append((n + 1 - j) * -math.log(remaining / prev_remaining))
        prev = t
    return residuals


def kolmogorov_sf(y: float) -> float:
    """Asymptotic Kolmogorov survival function Q(y) = 2 sum (-1)^(k-1) e^(-2 k^2 y^2).

    Series truncated once terms drop below 1e-12; for y below 0.15 the
    result is 1 to double precision.
    """
    if y <= 0.15:
        return 1.0
    total = 0.0
    sign = 1.0
    k = 1
    while True:
        term = math.exp(-2.0 * k * k * y * y)
        total += sign * term
        if term < 1e-12:
            break
        k += 1
        sign = -sign
    return min(max(2.0 * total, 0.0), 1.0)


_CDFS = {
    "std_exponential": lambda x: 1.0 - math.exp(-x) if x > 0.0 else 0.0,
    "uniform01": lambda x: min(max(x, 0.0), 1.0),
}


def ks_test(samples: Sequence[float], cdf: str) -> tuple:
    """One-sample KS test against a named reference distribution.

    Returns (D, p) with D the exact supremum distance of the empirical CDF
    from the reference and p from the asymptotic Kolmogorov distribution at
    sqrt(n) * D.
    """
    if cdf not in _CDFS:
        raise ValueError(f"unknown cdf tag {cdf!r}; expected one of {sorted(_CDFS)}")
    values = sorted(samples)
    n = len(values)
    if n == 0:
        raise ValueError("need at least one sample")
    if any(not math.isfinite(v) for v in values):
        raise ValueError("samples must be finite")
    ref = _CDFS[cdf]
    d = 0.0
    for j, x in enumerate(values, start=1):
        fx = ref(x)
        d = max(d, j / n - fx, fx - (j - 1) / n)
    return d, kolmogorov_sf(math.sqrt(n) * d)


@dataclass(frozen=True)
class StationaritySweepRow:
    """Result of testing one partition granularity."""

    interval_count: int
    interval_length_days: float
    fraction_not_rejected: float
    tested_intervals: int = 0
    excluded_intervals: int = 0

    def to_json(self) -> dict:
        return {
            "interval_count": self.interval_count,
            "interval_length_days": self.interval_length_days,
            "fraction_not_rejected": self.fraction_not_rejected,
            "tested_intervals": self.tested_intervals,
            "excluded_intervals": self.excluded_intervals,
        }


@dataclass(frozen=True)
class StationaritySweep:
    rows: tuple
    # Smallest interval length at which >= 90% of tested intervals pass.
    stationary_length_days: Optional[float] = None

    def to_json(self) -> dict:
        return {
            "rows": [r.to_json() for r in self.rows],
            "stationary_length_days": self.stationary_length_days,
        }


def stationarity_sweep(
    arrival_times: Sequence[float],
    horizon: tuple,
    interval_counts: Sequence[int],
    alpha: float = 0.05,
    min_events: int = 5,
    pass_fraction: float = 0.9,
) -> StationaritySweep:
    """Partition the horizon ever finer and KS-test each interval for H0.

    Intervals with fewer than `min_events` arrivals are excluded from the
    denominator (the asymptotic test is meaningless there).  Intervals with
    an arrival exactly on their right edge count as rejected (degenerate
    residual).
    """
    a, b = float(horizon[0]), float(horizon[1])
    times = sorted(arrival_times)
    if not times:
        raise ValueError("need at least one arrival")
    if times[0] < a or times[-1] > b:
        raise ValueError(f"arrivals must lie within the horizon [{a}, {b}]")

    rows = []
    for k in interval_counts:
        if k < 1:
            raise ValueError(f"interval count must be >= 1, got {k}")
        length = (b - a) / k
        edges = [a + i * length for i in range(k)] + [b]
        not_rejected = 0
        tested = 0
        excluded = 0
        for i in range(k):
            lo, hi = edges[i], edges[i + 1]
            left = bisect_left(times, lo)
            # the final interval is closed on the right
            right = bisect_right(times, hi) if i == k - 1 else bisect_left(times, hi)
            chunk = times[left:right]
            if len(chunk) < min_events:
                excluded += 1
                continue
            tested += 1
            residuals = exp_residuals(chunk, lo, hi)
            if any(not math.isfinite(r) for r in residuals):
                continue  # degenerate: counts as rejected
            _, p = ks_test(residuals, "std_exponential")
            if p >= alpha:
                not_rejected += 1
        fraction = not_rejected / tested if tested else 0.0
        rows.append(
            StationaritySweepRow(
                interval_count=k,
                interval_length_days=length,
                fraction_not_rejected=fraction,
                tested_intervals=tested,
                excluded_intervals=excluded,
            )
        )

    passing = [
        r.interval_length_days
        for r in rows
        if r.tested_intervals > 0 and r.fraction_not_rejected >= pass_fraction
    ]
    return StationaritySweep(
        rows=tuple(rows),
        stationary_length_days=min(passing) if passing else None,
    )


def sweep_to_csv(sweep: StationaritySweep) -> str:
    """Sweep rows in the tabular interface format (percent not rejected)."""
    lines = ["intervals,length_days,pct_not_rejected"]
    for row in sweep.rows:
        lines.append(
            f"{row.interval_count},{row.interval_length_days:.6f},"
            f"{100.0 * row.fraction_not_rejected:.2f}"
        )
    return "\n".join(lines) + "\n"
