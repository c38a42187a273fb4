"""Loading market series, attestations and news into domain values."""
from __future__ import annotations

import csv
import datetime as dt
import enum
import io
import json
import re
import threading
import urllib.error
import urllib.request
from dataclasses import dataclass
from decimal import Decimal, InvalidOperation
from pathlib import Path
from typing import Any, Callable, Iterable, Mapping
from urllib.parse import urlsplit, urlunsplit

from pegscope.errors import (
    ConfigurationError,
    DomainError,
    ExtractionError,
    IntegrityError,
    NotFoundError,
    ParseError,
    TransportError,
)
from pegscope.metrics import AssetId, DisclosureExtract, MarketSnapshot, as_asset, parse_date

MARKET_CSV_HEADER = ("date", "asset", "price_usd", "mcap_usd", "volume_daily", "volatility_daily")
ATTESTATION_KEYS = (
    "asset",
    "report_date",
    "circulation_rep",
    "asset_value",
    "liability_value",
    "auditor",
    "extractable",
    "source_id",
)
NEWS_KEYS = ("url", "published_date", "asset_tags", "headline", "body_text")
SUMMARY_CHARS = 400


class MediaKind(str, enum.Enum):
    TEXT = "text"
    STRUCTURED = "structured"
    IMAGE_ONLY = "image_only"


@dataclass(frozen=True)
class DisclosureDocument:
    source_id: str
    asset: AssetId
    report_date: dt.date
    media_kind: MediaKind
    body: str | None = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "asset", as_asset(self.asset))
        object.__setattr__(self, "report_date", parse_date(self.report_date))
        object.__setattr__(self, "media_kind", MediaKind(self.media_kind))
        if self.media_kind is MediaKind.IMAGE_ONLY and self.body is not None:
            raise DomainError(f"image-only document {self.source_id!r} cannot carry a text body")

    @classmethod
    def from_record(cls, extract: DisclosureExtract) -> "DisclosureDocument":
        """Wrap a stored, pre-extracted attestation record as a document."""
        if not extract.extractable:
            return cls(extract.source_id, extract.asset, extract.report_date, MediaKind.IMAGE_ONLY)
        body = json.dumps(extract.to_dict(), sort_keys=True)
        return cls(extract.source_id, extract.asset, extract.report_date, MediaKind.STRUCTURED, body)


def canonical_url(url: str) -> str:
    """Lowercase scheme and host, drop the fragment; reject relative URLs."""
    parts = urlsplit(url.strip())
    if not parts.scheme or not parts.netloc:
        raise DomainError(f"not an absolute URL: {url!r}")
    return urlunsplit((parts.scheme.lower(), parts.netloc.lower(), parts.path or "/", parts.query, ""))


@dataclass(frozen=True)
class NewsItem:
    url: str
    published_date: dt.date
    asset_tags: frozenset[AssetId]
    headline: str
    body_text: str

    def __post_init__(self) -> None:
        object.__setattr__(self, "url", canonical_url(self.url))
        object.__setattr__(self, "published_date", parse_date(self.published_date))
        object.__setattr__(self, "asset_tags", frozenset(as_asset(a) for a in self.asset_tags))

    @property
    def summary(self) -> str:
        return f"{self.headline}\n{self.body_text[:SUMMARY_CHARS]}"

    def to_dict(self) -> dict:
        return {
            "url": self.url,
            "published_date": self.published_date.isoformat(),
            "asset_tags": sorted(a.symbol for a in self.asset_tags),
            "headline": self.headline,
            "body_text": self.body_text,
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "NewsItem":
        return cls(d["url"], d["published_date"], d["asset_tags"], d["headline"], d["body_text"])


# -- market CSV ---------------------------------------------------------------


def _parse_decimal_field(text: str, name: str) -> float:
    if not re.fullmatch(r"[+-]?(\d+(\.\d*)?|\.\d+)([eE][+-]?\d+)?", text.strip()):
        raise ValueError(f"{name}={text!r} is not a plain decimal")
    return float(text)


def parse_market_csv(text: str, *, source: str = "<market csv>") -> list[MarketSnapshot]:
    reader = csv.reader(io.StringIO(text))
    try:
        header = next(reader)
    except StopIteration:
        raise ParseError("missing header", source=source, location=1) from None
    if tuple(h.strip() for h in header) != MARKET_CSV_HEADER:
        raise ParseError(f"header must be {','.join(MARKET_CSV_HEADER)}", source=source, location=1)
    snaps: dict[tuple[str, dt.date], MarketSnapshot] = {}
    for row in reader:
        line = reader.line_num
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != len(MARKET_CSV_HEADER):
            raise ParseError(f"expected {len(MARKET_CSV_HEADER)} columns, got {len(row)}", source=source, location=line)
        try:
            date = dt.date.fromisoformat(row[0].strip())
            snap = MarketSnapshot(
                asset=row[1],
                date=date,
                price_usd=_parse_decimal_field(row[2], "price_usd"),
                mcap_usd=_parse_decimal_field(row[3], "mcap_usd"),
                volume_daily=_parse_decimal_field(row[4], "volume_daily"),
                volatility_daily=_parse_decimal_field(row[5], "volatility_daily"),
            )
        except (ValueError, DomainError) as exc:
            raise ParseError(str(exc), source=source, location=line) from exc
        key = (snap.asset.symbol, snap.date)
        if key in snaps:
            raise IntegrityError(f"{source}:{line}: duplicate snapshot for ({key[0]}, {key[1]})")
        snaps[key] = snap
    return [snaps[k] for k in sorted(snaps)]


def load_market_csv(path: str | Path) -> list[MarketSnapshot]:
    """Read a market CSV; rows come back sorted by (asset, date)."""
    p = Path(path)
    return parse_market_csv(p.read_text(encoding="utf-8"), source=str(p))


def dump_market_csv(snapshots: Iterable[MarketSnapshot]) -> str:
    out = io.StringIO()
    w = csv.writer(out, lineterminator="\n")
    w.writerow(MARKET_CSV_HEADER)
    for s in sorted(snapshots, key=lambda s: (s.asset.symbol, s.date)):
        w.writerow([s.date.isoformat(), s.asset.symbol, repr(s.price_usd), repr(s.mcap_usd), repr(s.volume_daily), repr(s.volatility_daily)])
    return out.getvalue()


# -- attestation records ------------------------------------------------------


def parse_attestation_records(data: Any, *, source: str = "<attestations>") -> list[DisclosureExtract]:
    if not isinstance(data, list):
        raise ParseError("expected a JSON array of records", source=source)
    out: dict[tuple[str, dt.date], DisclosureExtract] = {}
    for i, rec in enumerate(data):
        if not isinstance(rec, dict):
            raise ParseError("record is not an object", source=source, location=i)
        missing = [k for k in ATTESTATION_KEYS if k not in rec]
        if missing:
            raise ParseError(f"record missing keys {missing}", source=source, location=i)
        extra = sorted(set(rec) - set(ATTESTATION_KEYS))
        if extra:
            raise ParseError(f"record has unknown keys {extra}", source=source, location=i)
        if not isinstance(rec["extractable"], bool):
            raise ParseError("extractable must be a boolean", source=source, location=i)
        for k in ("circulation_rep", "asset_value", "liability_value"):
            v = rec[k]
            if v is not None and (isinstance(v, bool) or not isinstance(v, (int, float))):
                raise ParseError(f"{k} must be a number or null", source=source, location=i)
        try:
            ex = DisclosureExtract.from_dict(rec)
        except (DomainError, KeyError) as exc:
            raise ParseError(str(exc), source=source, location=i) from exc
        key = (ex.asset.symbol, ex.report_date)
        if key in out:
            raise IntegrityError(f"{source}[{i}]: duplicate attestation for ({key[0]}, {key[1]})")
        out[key] = ex
    return [out[k] for k in sorted(out)]


def load_attestation_records(path: str | Path) -> list[DisclosureExtract]:
    """Read pre-extracted attestations, sorted by (asset, report_date)."""
    p = Path(path)
    try:
        data = json.loads(p.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ParseError(f"invalid JSON ({exc.msg})", source=str(p), location=exc.lineno) from exc
    return parse_attestation_records(data, source=str(p))


def dump_attestation_records(records: Iterable[DisclosureExtract]) -> str:
    recs = sorted(records, key=lambda r: (r.asset.symbol, r.report_date))
    return json.dumps([r.to_dict() for r in recs], indent=2) + "\n"


# -- news corpus --------------------------------------------------------------


def load_news(path: str | Path) -> list[NewsItem]:
    p = Path(path)
    items: dict[str, NewsItem] = {}
    for lineno, line in enumerate(p.read_text(encoding="utf-8").splitlines(), start=1):
        if not line.strip():
            continue
        try:
            d = json.loads(line)
            missing = [k for k in NEWS_KEYS if k not in d]
            if missing:
                raise ValueError(f"missing keys {missing}")
            item = NewsItem.from_dict(d)
        except (ValueError, DomainError, TypeError) as exc:
            raise ParseError(str(exc), source=str(p), location=lineno) from exc
        if item.url in items:
            raise IntegrityError(f"{p}:{lineno}: duplicate news url {item.url}")
        items[item.url] = item
    return sorted(items.values(), key=lambda n: (n.published_date, n.url))


def dump_news(items: Iterable[NewsItem]) -> str:
    return "".join(json.dumps(i.to_dict(), sort_keys=True) + "\n" for i in sorted(items, key=lambda n: (n.published_date, n.url)))


# -- disclosure extraction ----------------------------------------------------

UNIT_MULTIPLIERS = {
    "thousand": 10**3,
    "million": 10**6,
    "mn": 10**6,
    "billion": 10**9,
    "bn": 10**9,
    "trillion": 10**12,
    "tn": 10**12,
}

_NUMBER = r"\d{1,3}(?:[,_ \u00a0\u202f]\d{3})+(?:\.\d+)?(?!\d)|\d+(?:\.\d+)?"
_AMOUNT = (
    r"(?:US\$|USD|\$)?\s*"
    rf"(?P<num>{_NUMBER})"
    r"(?:\s*(?P<unit>thousand|million|billion|trillion|mn|bn|tn)\b)?"
)
# filler between label and amount: no digits, optionally one "as of <date>:" clause
_FILLER = r"(?:[^\d\n]{0,80}?\bas\s+of\b[^:\n]{0,40}:)?[^\d\n]{0,80}?"

FIELD_LABELS = {
    "asset_value": r"(?:total\s+)?(?:reserve\s+)?assets",
    "liability_value": r"(?:total\s+)?liabilities",
    "circulation_rep": r"(?:circulating\s+supply|(?:tokens?\s+)?in\s+circulation|circulation)",
}
_FIELD_RE = {
    name: re.compile(rf"\b{label}\b{_FILLER}{_AMOUNT}", re.IGNORECASE) for name, label in FIELD_LABELS.items()
}
_AUDITOR_RE = re.compile(r"\b(?:auditor|attested\s+by|examined\s+by)\s*[:\-]?\s*(?P<aud>[A-Za-z][^\n.;]*)", re.IGNORECASE)


def parse_amount(number: str, unit: str | None = None) -> float:
    """Resolve digit separators and unit words to a plain value.

    The arithmetic runs in :class:`~decimal.Decimal` so the result is the
    double nearest the exact written amount.
    """
    digits = re.sub(r"[,_ \u00a0\u202f]", "", number)
    try:
        value = Decimal(digits)
    except InvalidOperation as exc:
        raise DomainError(f"not a number: {number!r}") from exc
    if unit:
        value *= UNIT_MULTIPLIERS[unit.lower()]
    return float(value)


def _extract_text(doc: DisclosureDocument) -> DisclosureExtract:
    body = doc.body or ""
    values: dict[str, float] = {}
    for name, rx in _FIELD_RE.items():
        m = rx.search(body)
        if m is None:
            raise ExtractionError(name, doc.source_id)
        values[name] = parse_amount(m.group("num"), m.group("unit"))
    aud = _AUDITOR_RE.search(body)
    return DisclosureExtract(
        asset=doc.asset,
        report_date=doc.report_date,
        auditor=aud.group("aud").strip() if aud else None,
        extractable=True,
        source_id=doc.source_id,
        **values,
    )


def _extract_structured(doc: DisclosureDocument) -> DisclosureExtract:
    try:
        rec = json.loads(doc.body or "")
    except json.JSONDecodeError as exc:
        raise ExtractionError("body", doc.source_id) from exc
    for name in ("circulation_rep", "asset_value", "liability_value"):
        if rec.get(name) is None:
            raise ExtractionError(name, doc.source_id)
    return DisclosureExtract(
        asset=doc.asset,
        report_date=doc.report_date,
        circulation_rep=rec["circulation_rep"],
        asset_value=rec["asset_value"],
        liability_value=rec["liability_value"],
        auditor=rec.get("auditor"),
        extractable=True,
        source_id=doc.source_id,
    )


def extract_disclosure(doc: DisclosureDocument) -> DisclosureExtract:
    """Turn an attestation document into structured reserve figures.

    Image-only documents come back flagged ``extractable=False`` with no
    numerics. Text bodies go through the labelled-amount grammar; a missing
    field raises :class:`ExtractionError`.
    """
    if doc.media_kind is MediaKind.IMAGE_ONLY:
        return DisclosureExtract(
            asset=doc.asset,
            report_date=doc.report_date,
            circulation_rep=None,
            asset_value=None,
            liability_value=None,
            extractable=False,
            source_id=doc.source_id,
        )
    if doc.media_kind is MediaKind.STRUCTURED:
        return _extract_structured(doc)
    return _extract_text(doc)


def extractable_only(extracts: Iterable[DisclosureExtract]) -> list[DisclosureExtract]:
    return [e for e in extracts if e.extractable]


# -- remote market client -----------------------------------------------------

Opener = Callable[..., Any]


class MarketDataClient:
    """Fixture-first client for a CoinGecko-shaped ``/coins/{id}/history`` endpoint.

    Every fetched snapshot is written to ``store`` and later calls for the
    same (asset, date) are answered from it without touching the network.
    """

    _endpoint_locks: dict[str, threading.Lock] = {}
    _locks_guard = threading.Lock()

    def __init__(self, endpoint: str, store=None, *, enabled: bool = False, timeout: float = 10.0, opener: Opener | None = None):
        self.endpoint = endpoint.rstrip("/")
        self.store = store
        self.enabled = enabled
        self.timeout = timeout
        self._open = opener or urllib.request.urlopen

    def _lock(self) -> threading.Lock:
        with self._locks_guard:
            return self._endpoint_locks.setdefault(self.endpoint, threading.Lock())

    def history_url(self, asset: AssetId, date: dt.date) -> str:
        return f"{self.endpoint}/coins/{asset.remote_id}/history?date={date.strftime('%d-%m-%Y')}"

    def fetch_snapshot(self, asset: AssetId | str, date) -> MarketSnapshot:
        from pegscope.store import RecordKey

        asset, date = as_asset(asset), parse_date(date)
        key = RecordKey.market(asset, date)
        if self.store is not None and key in self.store:
            return MarketSnapshot.from_dict(self.store.get(key))
        if not self.enabled:
            raise ConfigurationError("network access is disabled; enable it explicitly to fetch remote snapshots")
        url = self.history_url(asset, date)
        with self._lock():
            try:
                with self._open(url, timeout=self.timeout) as resp:
                    raw = resp.read()
            except urllib.error.HTTPError as exc:
                if exc.code == 404:
                    raise NotFoundError(f"remote has no snapshot for ({asset}, {date.isoformat()})") from exc
                raise TransportError(f"HTTP {exc.code} from {url}") from exc
            except (urllib.error.URLError, OSError) as exc:
                raise TransportError(f"request to {url} failed: {exc}") from exc
        snap = snapshot_from_history(asset, date, json.loads(raw))
        if self.store is not None:
            self.store.put(key, snap.to_dict())
        return snap


def snapshot_from_history(asset: AssetId, date: dt.date, payload: Mapping) -> MarketSnapshot:
    """Map a history-day response onto a snapshot.

    The endpoint returns one price point per day, so daily volatility is 0.
    """
    try:
        md = payload["market_data"]
        price = md["current_price"]["usd"]
        mcap = md["market_cap"]["usd"]
        volume = md["total_volume"]["usd"]
    except (KeyError, TypeError) as exc:
        raise NotFoundError(f"remote response for ({asset}, {date.isoformat()}) lacks market_data") from exc
    return MarketSnapshot(asset, date, price, mcap, volume, 0.0)


def fetch_remote_snapshot(asset: AssetId | str, date, endpoint: str, *, store=None, enabled: bool = False, opener: Opener | None = None) -> MarketSnapshot:
    return MarketDataClient(endpoint, store, enabled=enabled, opener=opener).fetch_snapshot(asset, date)
