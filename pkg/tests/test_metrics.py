from __future__ import annotations

import datetime as dt
import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pegscope.errors import DomainError
from pegscope.metrics import (
    AssetId,
    DisclosureExtract,
    MarketSnapshot,
    aggregate_window,
    compute_alignment,
    compute_coverage,
    compute_implied_mcap,
    compute_peg_deviation,
    compute_supply_gap,
    compute_turnover,
    estimate_volatility,
    parse_date,
)

# -- oracle values ------------------------------------------------------------


@pytest.mark.parametrize(
    "volume, mcap, expected, tol",
    [
        (6.479e10, 8.227e10, 0.7875, 1e-3),  # USDT 2022-05-18
        (1.917e9, 4.979e10, 0.0385, 5e-4),  # USDC 2022-02-25
        (0.0, 1e9, 0.0, 0.0),
    ],
)
def test_turnover_oracles(volume, mcap, expected, tol):
    assert compute_turnover(volume, mcap) == pytest.approx(expected, abs=tol)


def test_turnover_rejects_zero_mcap_and_names_the_row():
    with pytest.raises(DomainError, match=r"USDT, 2022-05-18"):
        compute_turnover(1.0, 0.0, asset=AssetId("usdt"), date=dt.date(2022, 5, 18))
    with pytest.raises(DomainError):
        compute_turnover(-1.0, 1.0)


def test_peg_deviation_oracles():
    assert compute_peg_deviation(1.0) == 0.0
    assert compute_peg_deviation(0.90) == pytest.approx(-10.0, abs=1e-12)
    # the rounded price gives -0.04; the table's -0.0355 comes from the unrounded one
    assert compute_peg_deviation(0.9996) == pytest.approx(-0.04, abs=1e-9)
    assert compute_peg_deviation(0.999645) == pytest.approx(-0.0355, abs=1e-9)
    with pytest.raises(DomainError):
        compute_peg_deviation(0.0)


def test_coverage_oracles():
    assert compute_coverage(8.242e10, 8.226e10) == pytest.approx(1.002, abs=1e-3)
    assert compute_coverage(9.702e10, 9.160e10) == pytest.approx(1.059, abs=1e-3)
    assert compute_coverage(5e10, 5e10) == 1.0
    with pytest.raises(DomainError):
        compute_coverage(1.0, 0.0)


def test_implied_mcap_oracles():
    assert compute_implied_mcap(8.219e10, 0.9996) == pytest.approx(8.216e10, abs=1e7)
    assert compute_implied_mcap(2.497e10, 0.9996) == pytest.approx(2.496e10, abs=1e7)
    assert compute_implied_mcap(123.0, 1.0) == 123.0
    with pytest.raises(DomainError):
        compute_implied_mcap(0.0, 1.0)


def test_supply_gap_oracles():
    assert compute_supply_gap(4.258e10, 1.0, 4.351e10) == pytest.approx(-2.12, abs=0.05)
    assert compute_supply_gap(2.558e10, 0.9996, 2.497e10) == pytest.approx(2.47, abs=0.05)
    assert compute_supply_gap(7e9 * 0.97, 0.97, 7e9) == 0.0


def test_volatility_oracles():
    assert estimate_volatility([1.0, 1.0, 1.0]) == 0.0
    assert estimate_volatility([0.999, 1.001]) == pytest.approx(0.2002, abs=1e-4)
    assert estimate_volatility([1.0003]) == 0.0
    with pytest.raises(DomainError):
        estimate_volatility([])


def test_parse_date_accepts_both_table_and_iso_forms():
    assert parse_date("18/05/2022") == parse_date("2022-05-18") == dt.date(2022, 5, 18)
    with pytest.raises(DomainError):
        parse_date("2022-13-01")


def test_asset_id_normalises_and_rejects_unknown():
    assert AssetId("usdt") == AssetId(" USDT ")
    assert AssetId("usdc").remote_id == "usd-coin"
    with pytest.raises(DomainError):
        AssetId("dai")


def test_snapshot_invariants():
    with pytest.raises(DomainError, match="volume_daily"):
        MarketSnapshot("USDT", "2022-05-18", 1.0, 1e9, -5.0, 0.0)
    with pytest.raises(DomainError, match="price_usd"):
        MarketSnapshot("USDT", "2022-05-18", 0.0, 1e9, 5.0, 0.0)


def test_extract_invariants():
    with pytest.raises(DomainError):
        DisclosureExtract("USDC", "2022-06-22", 1.0, None, None, extractable=False)
    with pytest.raises(DomainError, match="exceeds"):
        DisclosureExtract("USDC", "2022-06-22", 2e9, 1e9, 1e9)
    stub = DisclosureExtract("USDC", "2022-06-22", None, None, None, extractable=False, source_id="x")
    with pytest.raises(DomainError):
        compute_alignment(MarketSnapshot("USDC", "2022-06-22", 1.0, 1e9, 1e8, 0.0), stub)


def _snap(day: int, price: float = 1.0, mcap: float = 1e9, asset: str = "USDT") -> MarketSnapshot:
    return MarketSnapshot(asset, dt.date(2022, 5, 1) + dt.timedelta(days=day), price, mcap, mcap / 10, 0.1)


def test_window_single_day_and_gaps():
    agg = aggregate_window([_snap(5, 0.998)], dt.date(2022, 5, 6), 0)
    assert (agg.mcap_change, agg.mean_price, agg.days_present) == (0.0, 0.998, 1)
    agg = aggregate_window([_snap(2), _snap(5, mcap=2e9), _snap(20)], dt.date(2022, 5, 5), 3)
    assert agg.days_present == 2 and agg.mcap_change == 1e9


def test_window_errors():
    with pytest.raises(DomainError, match="mix assets"):
        aggregate_window([_snap(1), _snap(2, asset="USDC")], dt.date(2022, 5, 2), 3)
    with pytest.raises(DomainError, match="no snapshot"):
        aggregate_window([_snap(1)], dt.date(2022, 6, 1), 3)
    with pytest.raises(DomainError, match="more than one"):
        aggregate_window([_snap(1), _snap(1)], dt.date(2022, 5, 2), 3)
    with pytest.raises(DomainError):
        aggregate_window([_snap(1)], dt.date(2022, 5, 2), -1)


# -- properties ---------------------------------------------------------------

prices = st.floats(min_value=0.5, max_value=1.5, allow_nan=False)
supplies = st.floats(min_value=1e6, max_value=2e11, allow_nan=False)


@settings(max_examples=1000, deadline=None)
@given(circ=supplies, price=prices)
def test_supply_gap_zero_identity(circ, price):
    assert compute_supply_gap(circ * price, price, circ) == 0.0


@settings(max_examples=1000, deadline=None)
@given(circ=supplies, price=prices, factor=st.floats(min_value=0.5, max_value=1.5))
def test_implied_mcap_and_gap_are_algebraically_consistent(circ, price, factor):
    # gaps within +/-50%; near -100% the subtraction cancels every digit
    mcap = circ * price * factor
    implied = compute_implied_mcap(circ, price)
    gap = compute_supply_gap(mcap, price, circ)
    direct = 100.0 * (mcap / price - circ) / circ
    assert math.isclose(gap, direct, rel_tol=1e-12, abs_tol=1e-12)
    assert math.isclose(implied * (1 + gap / 100.0), mcap, rel_tol=1e-12)


day_rows = st.lists(
    st.tuples(
        st.integers(min_value=0, max_value=30),
        st.floats(min_value=0.8, max_value=1.2),
        st.floats(min_value=1e8, max_value=1e11),
        st.floats(min_value=0, max_value=1e11),
    ),
    min_size=1,
    max_size=25,
    unique_by=lambda r: r[0],
)


@settings(max_examples=1000, deadline=None)
@given(rows=day_rows, center=st.integers(min_value=0, max_value=30), span=st.integers(min_value=0, max_value=10))
def test_window_matches_brute_force(rows, center, span):
    base = dt.date(2023, 3, 1)
    snaps = [MarketSnapshot("USDC", base + dt.timedelta(days=d), p, m, v, 0.0) for d, p, m, v in rows]
    c = base + dt.timedelta(days=center)
    inside = sorted((s for s in snaps if abs((s.date - c).days) <= span), key=lambda s: s.date)
    if not inside:
        with pytest.raises(DomainError):
            aggregate_window(snaps, c, span)
        return
    agg = aggregate_window(reversed(snaps), c, span)
    assert agg.days_present == len(inside)
    assert agg.mean_price == pytest.approx(sum(s.price_usd for s in inside) / len(inside), rel=1e-12)
    assert agg.mean_turnover == pytest.approx(sum(s.volume_daily / s.mcap_usd for s in inside) / len(inside), rel=1e-12)
    assert agg.max_abs_peg_dev_pct == max(abs(100.0 * (s.price_usd - 1.0)) for s in inside)
    assert agg.mcap_change == inside[-1].mcap_usd - inside[0].mcap_usd
