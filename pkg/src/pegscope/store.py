"""Append-only, keyed record store with canonical JSON payloads.

Layout under ``data_dir``::

    <namespace>.log       <key>\\t<canonical json>\\n   (the record log)
    <namespace>.meta.log  <key>\\t<inserted_at>\\n      (timestamps, sidecar)

The record log is byte-stable across replays of the same inserts; timestamps
live only in the sidecar.
"""
from __future__ import annotations

import datetime as dt
import hashlib
import json
import math
import os
import threading
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Iterable
from urllib.parse import quote, unquote

from pegscope.errors import DomainError, IntegrityError, NotFoundError, PegscopeError
from pegscope.metrics import AssetId, as_asset, parse_date

NAMESPACES = ("market", "attestation", "news", "outcome", "trace")
KEY_SEPARATOR = "/"


def _check_numbers(value: Any) -> None:
    if isinstance(value, float) and not math.isfinite(value):
        raise DomainError(f"non-finite number {value!r} has no canonical form")
    if isinstance(value, dict):
        for k, v in value.items():
            if not isinstance(k, str):
                raise DomainError(f"object keys must be strings, got {k!r}")
            _check_numbers(v)
    elif isinstance(value, (list, tuple)):
        for v in value:
            _check_numbers(v)


def canonical_json(value: Any) -> str:
    """Sorted keys, no whitespace, shortest round-trip numbers."""
    _check_numbers(value)
    return json.dumps(value, sort_keys=True, separators=(",", ":"), ensure_ascii=False, allow_nan=False)


def canonical_bytes(value: Any) -> bytes:
    return canonical_json(value).encode("utf-8")


def canonicalize(value: Any) -> Any:
    """Normalise a structured value to what a store round trip would return."""
    return json.loads(canonical_json(value))


def digest(value: Any) -> str:
    return hashlib.sha256(canonical_bytes(value)).hexdigest()


@dataclass(frozen=True)
class RecordKey:
    namespace: str
    key_parts: tuple[str, ...]

    def __post_init__(self) -> None:
        if self.namespace not in NAMESPACES:
            raise DomainError(f"unknown namespace {self.namespace!r}")
        parts = tuple(str(p) for p in self.key_parts)
        if not parts:
            raise DomainError("key_parts must be non-empty")
        object.__setattr__(self, "key_parts", parts)

    def serialize(self) -> str:
        # quote(safe="") escapes "/" so the join is injective
        return KEY_SEPARATOR.join([self.namespace, *(quote(p, safe="") for p in self.key_parts)])

    @classmethod
    def parse(cls, text: str) -> "RecordKey":
        ns, *parts = text.split(KEY_SEPARATOR)
        return cls(ns, tuple(unquote(p) for p in parts))

    @classmethod
    def market(cls, asset: AssetId | str, date) -> "RecordKey":
        return cls("market", (as_asset(asset).symbol, parse_date(date).isoformat()))

    @classmethod
    def attestation(cls, asset: AssetId | str, date) -> "RecordKey":
        return cls("attestation", (as_asset(asset).symbol, parse_date(date).isoformat()))

    @classmethod
    def news(cls, url: str) -> "RecordKey":
        return cls("news", (url,))


@dataclass(frozen=True)
class CanonicalDocument:
    key: RecordKey
    payload: bytes
    inserted_at: str | None = None


def _index_fields(namespace: str, value: dict) -> tuple[frozenset[str], dt.date | None]:
    """(assets, date) used by range queries."""
    if namespace in ("market", "outcome"):
        return frozenset([value["asset"]]), parse_date(value.get("date") or value["report_date"])
    if namespace == "attestation":
        return frozenset([value["asset"]]), parse_date(value["report_date"])
    if namespace == "news":
        return frozenset(value.get("asset_tags", ())), parse_date(value["published_date"])
    if namespace == "trace":
        return frozenset([value["asset"]]), parse_date(value["report_date"])
    return frozenset(), None


class Store:
    """Record store over per-namespace append-only logs.

    Reads are lock-free against an in-memory index; writes go through one
    lock so each record becomes visible atomically.
    """

    def __init__(self, data_dir: str | os.PathLike | None = None, *, readonly: bool = False):
        self.data_dir = Path(data_dir) if data_dir is not None else None
        self.readonly = readonly
        self._write_lock = threading.Lock()
        self._docs: dict[str, dict[str, CanonicalDocument]] = {ns: {} for ns in NAMESPACES}
        self._index: dict[str, dict[str, tuple[frozenset[str], dt.date | None]]] = {ns: {} for ns in NAMESPACES}
        if self.data_dir is not None:
            if readonly and not self.data_dir.is_dir():
                raise NotFoundError(f"store directory {self.data_dir} does not exist")
            if not readonly:
                self.data_dir.mkdir(parents=True, exist_ok=True)
            self._load()

    @classmethod
    def open(cls, data_dir, *, readonly: bool = False) -> "Store":
        return cls(data_dir, readonly=readonly)

    def _log_path(self, namespace: str) -> Path:
        return self.data_dir / f"{namespace}.log"

    def _meta_path(self, namespace: str) -> Path:
        return self.data_dir / f"{namespace}.meta.log"

    def _load(self) -> None:
        for ns in NAMESPACES:
            stamps: dict[str, str] = {}
            meta = self._meta_path(ns)
            if meta.exists():
                for line in meta.read_text(encoding="utf-8").splitlines():
                    if "\t" in line:
                        k, ts = line.split("\t", 1)
                        stamps.setdefault(k, ts)
            path = self._log_path(ns)
            if not path.exists():
                continue
            with path.open("r", encoding="utf-8", newline="\n") as fh:
                for lineno, line in enumerate(fh, start=1):
                    line = line.rstrip("\n")
                    if not line:
                        continue
                    try:
                        keytext, body = line.split("\t", 1)
                        key = RecordKey.parse(keytext)
                        value = json.loads(body)
                    except (ValueError, DomainError) as exc:
                        raise PegscopeError(f"{path}:{lineno}: corrupt log line ({exc})") from exc
                    self._remember(key, body.encode("utf-8"), value, stamps.get(keytext))

    def _remember(self, key: RecordKey, payload: bytes, value: dict, stamp: str | None) -> None:
        ks = key.serialize()
        self._index[key.namespace][ks] = _index_fields(key.namespace, value) if isinstance(value, dict) else (frozenset(), None)
        self._docs[key.namespace][ks] = CanonicalDocument(key, payload, stamp)

    def put(self, key: RecordKey, payload: Any) -> bool:
        """Insert ``payload`` at ``key``; returns False when it was already stored.

        Re-inserting an identical payload is a no-op; a different payload
        raises :class:`IntegrityError`.
        """
        if self.readonly:
            raise PegscopeError("store is read-only")
        body = canonical_bytes(payload)
        ks = key.serialize()
        with self._write_lock:
            existing = self._docs[key.namespace].get(ks)
            if existing is not None:
                if existing.payload == body:
                    return False
                raise IntegrityError(
                    f"conflicting payload for {ks}: stored sha256={hashlib.sha256(existing.payload).hexdigest()} "
                    f"new sha256={hashlib.sha256(body).hexdigest()}"
                )
            stamp = dt.datetime.now(dt.timezone.utc).isoformat(timespec="seconds")
            if self.data_dir is not None:
                with self._log_path(key.namespace).open("ab") as fh:
                    fh.write(ks.encode("utf-8") + b"\t" + body + b"\n")
                    fh.flush()
                    os.fsync(fh.fileno())
                with self._meta_path(key.namespace).open("a", encoding="utf-8") as fh:
                    fh.write(f"{ks}\t{stamp}\n")
            self._remember(key, body, json.loads(body), stamp)
        return True

    def get_bytes(self, key: RecordKey) -> bytes:
        doc = self._docs[key.namespace].get(key.serialize())
        if doc is None:
            raise NotFoundError(f"no record at {key.serialize()}")
        return doc.payload

    def get(self, key: RecordKey) -> Any:
        return json.loads(self.get_bytes(key))

    def __contains__(self, key: RecordKey) -> bool:
        return key.serialize() in self._docs[key.namespace]

    def keys(self, namespace: str) -> list[RecordKey]:
        return [self._docs[namespace][k].key for k in sorted(self._docs[namespace])]

    def count(self, namespace: str) -> int:
        return len(self._docs[namespace])

    def values(self, namespace: str) -> list[Any]:
        return [json.loads(self._docs[namespace][k].payload) for k in sorted(self._docs[namespace])]

    def range(self, namespace: str, asset: AssetId | str, start, end) -> list[Any]:
        """Records of ``asset`` dated within ``[start, end]``, ascending by date.

        Ties on date are broken by key serialisation so the order is stable.
        """
        lo, hi = parse_date(start), parse_date(end)
        if lo > hi:
            raise DomainError(f"range start {lo} is after end {hi}")
        sym = as_asset(asset).symbol
        hits = []
        for ks, (assets, date) in list(self._index[namespace].items()):
            if date is not None and sym in assets and lo <= date <= hi:
                hits.append((date, ks))
        hits.sort()
        return [json.loads(self._docs[namespace][ks].payload) for _, ks in hits]

    def put_many(self, items: Iterable[tuple[RecordKey, Any]]) -> int:
        return sum(1 for k, v in items if self.put(k, v))
