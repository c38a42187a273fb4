from __future__ import annotations

import dataclasses

import pytest

from conftest import load_table_rows
from pegscope.agents import Thresholds
from pegscope.calibration import (
    THRESHOLD_QUANTITIES,
    feasible_range,
    frange,
    mismatches,
    robust_values,
    row_label,
    threshold_margins,
)
from pegscope.report import analyze_store


@pytest.fixture(scope="module")
def rows_and_labels(fixture_store):
    report = analyze_store(fixture_store)
    expected = {(r["asset"], r["report_date"]): r["analysis_outcome"] for r in load_table_rows()}
    return report, expected


def test_row_label_agrees_with_pipeline(rows_and_labels):
    report, _ = rows_and_labels
    th = Thresholds.load()
    for r in report.rows:
        assert row_label(r, th) == r.analysis_outcome, (r.asset, r.report_date)


def test_shipped_thresholds_have_no_mismatches(rows_and_labels):
    report, expected = rows_and_labels
    assert mismatches(report.rows, expected, Thresholds.load()) == []


def test_tightening_the_liquidity_rule_flags_more_rows(rows_and_labels):
    report, expected = rows_and_labels
    tight = dataclasses.replace(Thresholds.load(), turnover_suspicious=0.1, volatility_suspicious=0.01)
    assert mismatches(report.rows, expected, tight)


def test_shipped_turnover_threshold_is_inside_feasible_and_robust_range(rows_and_labels):
    report, expected = rows_and_labels
    th = Thresholds.load()
    grid = frange(0.2, 0.6, 0.01)
    feasible = feasible_range(report.rows, expected, th, "turnover_suspicious", grid)
    assert min(feasible) <= th.turnover_suspicious <= max(feasible)
    robust = robust_values(report.rows, expected, th, "turnover_suspicious", grid)
    assert th.turnover_suspicious in robust


def test_gap_suspicious_has_no_robust_value(rows_and_labels):
    # the nearest fixture gap sits under 4% below any value that keeps the labels
    report, expected = rows_and_labels
    th = Thresholds.load()
    grid = frange(0.5, 1.5, 0.001)
    feasible = feasible_range(report.rows, expected, th, "gap_suspicious", grid)
    assert feasible and th.gap_suspicious in feasible
    assert robust_values(report.rows, expected, th, "gap_suspicious", grid) == []


def test_margins_cover_every_threshold(rows_and_labels):
    report, _ = rows_and_labels
    margins = threshold_margins(report.rows, Thresholds.load())
    assert set(margins) == set(THRESHOLD_QUANTITIES)
    assert margins["turnover_suspicious"].ok
    assert not margins["coverage_abnormal"].ok


def test_frange_endpoints():
    assert frange(0.0, 1.0, 0.25) == [0.0, 0.25, 0.5, 0.75, 1.0]
    assert frange(1.0, 1.0, 0.1) == [1.0]
