from __future__ import annotations

import datetime as dt
import json
import threading

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pegscope.errors import DomainError, IntegrityError, NotFoundError, PegscopeError
from pegscope.store import RecordKey, Store, canonical_bytes, canonical_json, canonicalize


def _snap(asset: str, date: str, mcap: float = 1e9) -> dict:
    return {"asset": asset, "date": date, "price_usd": 1.0, "mcap_usd": mcap, "volume_daily": 1e8, "volatility_daily": 0.0}


def test_put_is_idempotent_and_conflicts_raise(tmp_path):
    s = Store(tmp_path)
    k = RecordKey.market("USDT", "2022-05-18")
    assert s.put(k, _snap("USDT", "2022-05-18")) is True
    assert s.put(k, _snap("USDT", "2022-05-18")) is False
    assert s.count("market") == 1
    with pytest.raises(IntegrityError, match="sha256=") as info:
        s.put(k, _snap("USDT", "2022-05-18", mcap=2e9))
    assert str(info.value).count("sha256=") == 2


def test_fixture_counts_and_lookup(fixture_store):
    assert fixture_store.count("attestation") == 32
    extractable = [v for v in fixture_store.values("attestation") if v["extractable"]]
    assert len(extractable) == 31
    snap = fixture_store.get(RecordKey.market("USDT", "2022-05-18"))
    assert snap["mcap_usd"] == 8.227e10
    with pytest.raises(NotFoundError):
        fixture_store.get(RecordKey.market("USDT", "1999-01-01"))


def test_get_twice_returns_identical_bytes(fixture_store):
    k = RecordKey.attestation("USDC", "2022-02-25")
    assert fixture_store.get_bytes(k) == fixture_store.get_bytes(k)


def test_range_window_and_errors(fixture_store):
    rows = fixture_store.range("market", "USDT", "2022-05-09", "2022-05-15")
    assert 0 < len(rows) <= 7
    assert [r["date"] for r in rows] == sorted(r["date"] for r in rows)
    assert fixture_store.range("market", "USDT", "2001-01-01", "2001-01-31") == []
    with pytest.raises(DomainError):
        fixture_store.range("market", "USDT", "2022-05-15", "2022-05-09")


def test_reopen_replays_the_log(tmp_path):
    s = Store(tmp_path)
    s.put(RecordKey.news("https://x.example.com/a"), {"url": "https://x.example.com/a", "asset_tags": ["USDT"], "published_date": "2022-05-13"})
    s.put(RecordKey.market("USDC", "2022-05-12"), _snap("USDC", "2022-05-12"))
    again = Store(tmp_path, readonly=True)
    assert again.keys("market") == s.keys("market")
    assert again.get_bytes(RecordKey.market("USDC", "2022-05-12")) == s.get_bytes(RecordKey.market("USDC", "2022-05-12"))
    with pytest.raises(PegscopeError, match="read-only"):
        again.put(RecordKey.market("USDC", "2022-05-13"), _snap("USDC", "2022-05-13"))


def test_record_log_is_timestamp_free(tmp_path):
    a, b = Store(tmp_path / "a"), Store(tmp_path / "b")
    for s in (a, b):
        s.put(RecordKey.market("USDT", "2022-05-18"), _snap("USDT", "2022-05-18"))
    assert (tmp_path / "a" / "market.log").read_bytes() == (tmp_path / "b" / "market.log").read_bytes()
    assert (tmp_path / "a" / "market.meta.log").exists()


def test_readonly_open_of_missing_dir_fails(tmp_path):
    with pytest.raises(NotFoundError):
        Store(tmp_path / "absent", readonly=True)


def test_corrupt_log_line_is_reported(tmp_path):
    (tmp_path / "market.log").write_text("market/USDT/2022-05-18\t{not json\n", encoding="utf-8")
    with pytest.raises(PegscopeError, match="market.log:1"):
        Store(tmp_path)


def test_key_serialisation_escapes_separators():
    k = RecordKey.news("https://a.example.com/x/y?q=1#f")
    assert RecordKey.parse(k.serialize()) == k
    assert k.serialize().count("/") == 1
    with pytest.raises(DomainError):
        RecordKey("bogus", ("x",))


def test_canonical_json_rejects_non_finite():
    with pytest.raises(DomainError):
        canonical_json({"x": float("nan")})
    assert canonical_json({"b": 1, "a": [1.5, "é"]}) == '{"a":[1.5,"é"],"b":1}'


def test_concurrent_puts_keep_one_record_per_key(tmp_path):
    s = Store(tmp_path)
    keys = [RecordKey.market("USDT", dt.date(2022, 1, 1) + dt.timedelta(days=i)) for i in range(40)]

    def work():
        for k in keys:
            s.put(k, _snap("USDT", k.key_parts[1]))

    threads = [threading.Thread(target=work) for _ in range(4)]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    lines = (tmp_path / "market.log").read_text(encoding="utf-8").splitlines()
    assert len(lines) == 40 == s.count("market")


# -- properties ---------------------------------------------------------------

json_scalars = st.none() | st.booleans() | st.integers(-(2**53), 2**53) | st.floats(allow_nan=False, allow_infinity=False) | st.text(max_size=12)
json_values = st.recursive(
    json_scalars,
    lambda inner: st.lists(inner, max_size=4) | st.dictionaries(st.text(max_size=8), inner, max_size=4),
    max_leaves=20,
)


@settings(max_examples=1000, deadline=None)
@given(value=json_values)
def test_canonicalization_fixed_point(value):
    once = canonical_bytes(value)
    assert canonical_bytes(json.loads(once)) == once
    assert canonical_bytes(canonicalize(value)) == once


records = st.lists(
    st.tuples(st.sampled_from(["USDT", "USDC"]), st.integers(min_value=0, max_value=60)),
    max_size=40,
    unique=True,
)


@settings(max_examples=1000, deadline=None)
@given(
    recs=records,
    asset=st.sampled_from(["USDT", "USDC"]),
    lo=st.integers(min_value=-5, max_value=65),
    width=st.integers(min_value=0, max_value=30),
)
def test_range_matches_linear_scan(recs, asset, lo, width):
    base = dt.date(2022, 5, 1)
    s = Store()
    for a, d in recs:
        date = (base + dt.timedelta(days=d)).isoformat()
        s.put(RecordKey.market(a, date), _snap(a, date))
    start, end = base + dt.timedelta(days=lo), base + dt.timedelta(days=lo + width)
    expected = sorted(
        (v for v in s.values("market") if v["asset"] == asset and start.isoformat() <= v["date"] <= end.isoformat()),
        key=lambda v: v["date"],
    )
    assert s.range("market", asset, start, end) == expected
