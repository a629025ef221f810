"""Pillar discount curves with log-linear interpolation, plus spot-repo stripping."""

from __future__ import annotations

import bisect
import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence


@dataclass(frozen=True)
class DiscountCurve:
    """Discount factors at pillar times, anchored at df(valuation_time) = 1.

    Log df is linear between pillars, so instantaneous forwards are piecewise
    constant. Queries past the last pillar raise; there is no implicit
    extrapolation.
    """

    valuation_time: float
    times: tuple[float, ...]
    dfs: tuple[float, ...]
    _log_dfs: tuple[float, ...] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        times = tuple(float(x) for x in self.times)
        dfs = tuple(float(x) for x in self.dfs)
        if len(times) != len(dfs):
            raise ValueError("times and dfs differ in length")
        t0 = float(self.valuation_time)
        if times and times[0] == t0:
            # explicit anchor pillar is tolerated only if it agrees with the implicit one
            if dfs[0] != 1.0:
                raise ValueError(f"df at valuation time must be 1, got {dfs[0]}")
            times, dfs = times[1:], dfs[1:]
        prev = t0
        for x, df in zip(times, dfs):
            if not math.isfinite(x) or x <= prev:
                raise ValueError(f"pillar times must be strictly increasing after {t0}: {x} after {prev}")
            if not (df > 0.0 and math.isfinite(df)):
                raise ValueError(f"discount factor must be positive, got {df} at t={x}")
            prev = x
        object.__setattr__(self, "valuation_time", t0)
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "dfs", dfs)
        object.__setattr__(self, "_log_dfs", tuple(math.log(df) for df in dfs))

    @property
    def last_time(self) -> float:
        return self.times[-1] if self.times else self.valuation_time

    @property
    def knots(self) -> tuple[float, ...]:
        """Valuation time followed by the pillar times."""
        return (self.valuation_time,) + self.times

    def _check_span(self, time: float) -> None:
        if not (self.valuation_time <= time <= self.last_time):
            raise ValueError(
                f"time {time} outside curve span [{self.valuation_time}, {self.last_time}]"
            )

    def log_df(self, time: float) -> float:
        time = float(time)
        self._check_span(time)
        if time == self.valuation_time:
            return 0.0
        i = bisect.bisect_left(self.times, time)
        if self.times[i] == time:
            return self._log_dfs[i]
        a = self.times[i - 1] if i > 0 else self.valuation_time
        la = self._log_dfs[i - 1] if i > 0 else 0.0
        b, lb = self.times[i], self._log_dfs[i]
        return ((b - time) * la + (time - a) * lb) / (b - a)

    def df(self, time: float) -> float:
        time = float(time)
        self._check_span(time)
        i = bisect.bisect_left(self.times, time)
        if i < len(self.times) and self.times[i] == time:
            return self.dfs[i]
        return math.exp(self.log_df(time))

    __call__ = df

    def forward(self, time: float, side: str = "right") -> float:
        """Instantaneous forward on the interval containing ``time``.

        At a pillar the right-hand interval is used unless ``side="left"``;
        the last pillar only has a left interval and the valuation time only
        a right one.
        """
        time = float(time)
        self._check_span(time)
        knots = self.knots
        if len(knots) < 2:
            raise ValueError("curve has no pillar interval")
        if side == "right":
            j = bisect.bisect_right(knots, time)
            if j >= len(knots):
                raise ValueError(f"no pillar interval to the right of {time}")
        elif side == "left":
            j = bisect.bisect_left(knots, time)
            if j == 0:
                raise ValueError(f"no pillar interval to the left of {time}")
        else:
            raise ValueError(f"side must be 'left' or 'right', got {side!r}")
        a, b = knots[j - 1], knots[j]
        la = self._log_dfs[j - 2] if j >= 2 else 0.0
        lb = self._log_dfs[j - 1]
        return -(lb - la) / (b - a)


def build_curve(valuation_time: float, pillars: Iterable[tuple[float, float]]) -> DiscountCurve:
    pillars = list(pillars)
    return DiscountCurve(
        valuation_time, tuple(p[0] for p in pillars), tuple(p[1] for p in pillars)
    )


def discount_factor(curve: DiscountCurve, time: float) -> float:
    return curve.df(time)


def instantaneous_forward(curve: DiscountCurve, time: float) -> float:
    return curve.forward(time)


@dataclass(frozen=True)
class RepoQuote:
    start: float
    end: float
    rate: float
    accrual: float

    def __post_init__(self):
        if not self.start < self.end:
            raise ValueError(f"quote start {self.start} must precede end {self.end}")
        if not self.accrual > 0.0:
            raise ValueError(f"accrual must be positive, got {self.accrual}")
        if not 1.0 + self.rate * self.accrual > 0.0:
            raise ValueError(f"quote implies non-positive df: rate={self.rate}, accrual={self.accrual}")


def strip_bond_curve_from_spot_repos(quotes: Sequence[RepoQuote]) -> DiscountCurve:
    """Invert spot-starting repo-to-maturity quotes, df(end) = 1 / (1 + rate * accrual)."""
    if not quotes:
        raise ValueError("no quotes to strip")
    t0 = quotes[0].start
    if any(q.start != t0 for q in quotes):
        raise ValueError("all quotes must start at the valuation time")
    ordered = sorted(quotes, key=lambda q: q.end)
    for q0, q1 in zip(ordered, ordered[1:]):
        if q0.end == q1.end:
            raise ValueError(f"duplicate quote end date {q1.end}")
    return build_curve(t0, [(q.end, 1.0 / (1.0 + q.rate * q.accrual)) for q in ordered])


def read_curve_csv(path: str | Path, valuation_time: float = 0.0) -> DiscountCurve:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or [f.strip() for f in reader.fieldnames] != ["time", "df"]:
            raise ValueError(f"{path}: expected header 'time,df'")
        rows = [(float(r["time"]), float(r["df"])) for r in reader]
    return build_curve(valuation_time, rows)


def format_curve_csv(curve: DiscountCurve) -> str:
    lines = ["time,df"]
    lines += [f"{t!r},{df!r}" for t, df in zip(curve.times, curve.dfs)]
    return "\n".join(lines) + "\n"


def read_quotes_csv(path: str | Path) -> list[RepoQuote]:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        expected = ["start", "end", "rate", "accrual"]
        if reader.fieldnames is None or [f.strip() for f in reader.fieldnames] != expected:
            raise ValueError(f"{path}: expected header '{','.join(expected)}'")
        return [
            RepoQuote(float(r["start"]), float(r["end"]), float(r["rate"]), float(r["accrual"]))
            for r in reader
        ]
