"""Threshold calibration checks against labelled report rows.

Labels depend only on report-day values, so a row is enough to re-run the
rules under any candidate configuration. That makes brute-force sweeps
cheap: ``feasible_range`` scans a grid for values that keep every label,
and ``threshold_margins`` measures how close each frozen threshold sits to
the nearest observed value of the quantity it cuts.
"""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from typing import Callable, Iterable, Mapping, Sequence

from pegscope.agents import (
    Severity,
    Thresholds,
    rule_attestation_quality,
    rule_coverage,
    rule_liquidity,
    rule_peg,
    rule_supply_gap,
)
from pegscope.errors import ConfigurationError
from pegscope.report import ReportRow

# threshold name -> quantity it is compared against
THRESHOLD_QUANTITIES: dict[str, Callable[[ReportRow], float]] = {
    "coverage_abnormal": lambda r: r.coverage_ratio,
    "gap_suspicious": lambda r: abs(r.supply_gap_pct),
    "gap_abnormal": lambda r: abs(r.supply_gap_pct),
    "turnover_abnormal": lambda r: r.turnover_ratio,
    "turnover_suspicious": lambda r: r.turnover_ratio,
    "volatility_suspicious": lambda r: r.volatility_daily,
    "peg_suspicious": lambda r: abs(r.peg_deviation_pct),
    "peg_abnormal": lambda r: abs(r.peg_deviation_pct),
    "staleness_days": lambda r: 0.0,  # attestations are analysed on their report date
}

MIN_MARGIN = 0.05


def row_label(row: ReportRow, th: Thresholds, *, age_days: int = 0) -> str:
    """Label a row under ``th`` with the same rules the classifier applies."""
    results = (
        rule_coverage(row.coverage_ratio, th),
        rule_attestation_quality(True, age_days, th),
        rule_supply_gap(row.supply_gap_pct, th),
        rule_liquidity(row.turnover_ratio, row.volatility_daily, th),
        rule_peg(row.peg_deviation_pct, th),
    )
    return Severity(max(int(sev) for sev, _, _ in results)).label


def mismatches(rows: Iterable[ReportRow], expected: Mapping, th: Thresholds) -> list[tuple]:
    """Rows whose label under ``th`` differs from ``expected[(symbol, date)]``."""
    out = []
    for r in rows:
        want = expected[(r.asset.symbol, r.report_date)]
        got = row_label(r, th)
        if got != want:
            out.append((r.asset.symbol, r.report_date, want, got))
    return out


@dataclass(frozen=True)
class Margin:
    name: str
    threshold: float
    nearest: float
    relative: float

    @property
    def ok(self) -> bool:
        return self.relative >= MIN_MARGIN


def threshold_margins(rows: Sequence[ReportRow], th: Thresholds) -> dict[str, Margin]:
    """Relative distance ``|t - v| / |t|`` from each threshold to its nearest observed value."""
    out = {}
    for name, quantity in THRESHOLD_QUANTITIES.items():
        t = float(getattr(th, name))
        values = [quantity(r) for r in rows]
        if not values:
            continue
        nearest = min(values, key=lambda v: (abs(v - t), v))
        rel = abs(nearest - t) / abs(t) if t else float("inf")
        out[name] = Margin(name, t, nearest, rel)
    return out


def feasible_range(
    rows: Sequence[ReportRow],
    expected: Mapping,
    th: Thresholds,
    name: str,
    grid: Iterable[float],
) -> list[float]:
    """Grid values of threshold ``name`` (others fixed) that keep every label."""
    ok = []
    for v in grid:
        try:
            cand = dataclasses.replace(th, **{name: v})
        except ConfigurationError:
            continue  # violates ordering invariants such as suspicious < abnormal
        if not mismatches(rows, expected, cand):
            ok.append(v)
    return ok


def robust_values(
    rows: Sequence[ReportRow],
    expected: Mapping,
    th: Thresholds,
    name: str,
    grid: Iterable[float],
    margin: float = MIN_MARGIN,
) -> list[float]:
    """Feasible grid values that also keep ``margin`` from every observed value."""
    quantity = THRESHOLD_QUANTITIES[name]
    values = [quantity(r) for r in rows]
    return [
        v
        for v in feasible_range(rows, expected, th, name, grid)
        if v and all(abs(x - v) / abs(v) >= margin for x in values)
    ]


def frange(lo: float, hi: float, step: float) -> list[float]:
    n = int(round((hi - lo) / step))
    return [round(lo + i * step, 10) for i in range(n + 1)]
