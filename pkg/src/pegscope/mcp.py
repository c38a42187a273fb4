"""Five stateless data tools served over newline-delimited JSON-RPC 2.0.

Two market tools return daily snapshots; three textual tools return news
summaries for a date range or one full article by URL. Tool failures are
in-band (``is_error: true``); JSON-RPC errors are reserved for envelope
problems. Every response line is canonical JSON, so identical requests give
identical bytes no matter what ran before them.
"""
from __future__ import annotations

import datetime as dt
import json
import socketserver
import sys
import threading
from dataclasses import dataclass
from typing import Any, Callable, Iterable, TextIO

from pegscope import __version__
from pegscope.errors import DomainError, NotFoundError
from pegscope.ingest import NewsItem, canonical_url
from pegscope.store import RecordKey, Store, canonical_json, digest

PARSE_ERROR = -32700
INVALID_REQUEST = -32600
METHOD_NOT_FOUND = -32601
INVALID_PARAMS = -32602
INTERNAL_ERROR = -32603

PROTOCOL_VERSION = "2024-11-05"


class ToolError(Exception):
    """Reported in-band as ``is_error: true``."""


class InvalidParams(Exception):
    """Reported as a JSON-RPC invalid-params error."""


@dataclass(frozen=True)
class ToolDescriptor:
    name: str
    description: str
    input_schema: dict
    output_schema: dict

    def to_wire(self) -> dict:
        return {
            "name": self.name,
            "description": self.description,
            "inputSchema": self.input_schema,
            "outputSchema": self.output_schema,
        }


@dataclass(frozen=True)
class ToolCallLog:
    seq: int
    tool: str
    arguments: str
    result_digest: str
    is_error: bool
    wall_time: str

    def to_dict(self) -> dict:
        return {
            "seq": self.seq,
            "tool": self.tool,
            "arguments": self.arguments,
            "result_digest": self.result_digest,
            "is_error": self.is_error,
            "wall_time": self.wall_time,
        }


@dataclass(frozen=True)
class ToolResult:
    is_error: bool
    content: Any
    seq: int


_DATE = {"type": "string", "format": "date", "description": "ISO-8601 day, YYYY-MM-DD"}
_NUM = {"type": "number"}

_SNAPSHOT_OUT = {
    "type": "object",
    "properties": {
        "asset": {"type": "string"},
        "date": _DATE,
        "price_usd": _NUM,
        "mcap_usd": _NUM,
        "volume_usd": _NUM,
        "volatility_daily": _NUM,
    },
    "required": ["asset", "date", "price_usd", "mcap_usd", "volume_usd", "volatility_daily"],
}
_RANGE_IN = {
    "type": "object",
    "properties": {"start": _DATE, "end": _DATE},
    "required": ["start", "end"],
    "additionalProperties": False,
}
_RANGE_OUT = {
    "type": "array",
    "items": {
        "type": "object",
        "properties": {
            "date": _DATE,
            "headline": {"type": "string"},
            "url": {"type": "string"},
            "summary": {"type": "string"},
        },
        "required": ["date", "headline", "url", "summary"],
    },
}
_ARTICLE_OUT = {
    "type": "object",
    "properties": {
        "url": {"type": "string"},
        "title": {"type": "string"},
        "published_date": _DATE,
        "body_text": {"type": "string"},
    },
    "required": ["url", "title", "published_date", "body_text"],
}


def _iso_date(args: dict, name: str) -> dt.date:
    value = args.get(name)
    if not isinstance(value, str) or len(value) != 10:
        raise InvalidParams(f"{name} must be an ISO date string YYYY-MM-DD")
    try:
        return dt.date.fromisoformat(value)
    except ValueError:
        raise InvalidParams(f"{name} must be an ISO date string YYYY-MM-DD") from None


def _only(args: dict, allowed: set[str]) -> None:
    extra = sorted(set(args) - allowed)
    if extra:
        raise InvalidParams(f"unexpected arguments {extra}")


def _market_tool(symbol: str) -> Callable[[Store, dict], Any]:
    def run(store: Store, args: dict) -> dict:
        _only(args, {"date"})
        day = _iso_date(args, "date")
        try:
            snap = store.get(RecordKey.market(symbol, day))
        except NotFoundError:
            raise ToolError(f"snapshot not found for {symbol} on {day.isoformat()}") from None
        return {
            "asset": snap["asset"],
            "date": snap["date"],
            "price_usd": snap["price_usd"],
            "mcap_usd": snap["mcap_usd"],
            "volume_usd": snap["volume_daily"],
            "volatility_daily": snap["volatility_daily"],
        }

    return run


def _news_range_tool(symbol: str) -> Callable[[Store, dict], Any]:
    def run(store: Store, args: dict) -> list:
        _only(args, {"start", "end"})
        start, end = _iso_date(args, "start"), _iso_date(args, "end")
        if start > end:
            raise ToolError(f"start {start.isoformat()} is after end {end.isoformat()}")
        items = [NewsItem.from_dict(d) for d in store.range("news", symbol, start, end)]
        return [
            {"date": n.published_date.isoformat(), "headline": n.headline, "url": n.url, "summary": n.summary}
            for n in items
        ]

    return run


def _article_tool(store: Store, args: dict) -> dict:
    _only(args, {"url"})
    url = args.get("url")
    if not isinstance(url, str) or not url:
        raise InvalidParams("url must be a non-empty string")
    try:
        key = RecordKey.news(canonical_url(url))
    except DomainError as exc:
        raise InvalidParams(str(exc)) from None
    try:
        d = store.get(key)
    except NotFoundError:
        raise ToolError(f"article not found: {url}") from None
    return {"url": d["url"], "title": d["headline"], "published_date": d["published_date"], "body_text": d["body_text"]}


def _snapshot_descriptor(symbol: str) -> ToolDescriptor:
    return ToolDescriptor(
        name=f"market.{symbol.lower()}_snapshot",
        description=f"Daily {symbol} price snapshot (price, market cap, volume, daily volatility) for one UTC day.",
        input_schema={
            "type": "object",
            "properties": {"date": _DATE},
            "required": ["date"],
            "additionalProperties": False,
        },
        output_schema=_SNAPSHOT_OUT,
    )


def _range_descriptor(symbol: str) -> ToolDescriptor:
    return ToolDescriptor(
        name=f"news.{symbol.lower()}_range",
        description=f"Summaries of {symbol} media coverage published within [start, end], ascending by date.",
        input_schema=_RANGE_IN,
        output_schema=_RANGE_OUT,
    )


TOOLS: dict[str, tuple[ToolDescriptor, Callable[[Store, dict], Any]]] = {
    "market.usdt_snapshot": (_snapshot_descriptor("USDT"), _market_tool("USDT")),
    "market.usdc_snapshot": (_snapshot_descriptor("USDC"), _market_tool("USDC")),
    "news.usdt_range": (_range_descriptor("USDT"), _news_range_tool("USDT")),
    "news.usdc_range": (_range_descriptor("USDC"), _news_range_tool("USDC")),
    "news.article": (
        ToolDescriptor(
            name="news.article",
            description="Full news article addressed by canonical URL (fragment and host case are ignored).",
            input_schema={
                "type": "object",
                "properties": {"url": {"type": "string", "format": "uri"}},
                "required": ["url"],
                "additionalProperties": False,
            },
            output_schema=_ARTICLE_OUT,
        ),
        _article_tool,
    ),
}


def list_tools() -> list[dict]:
    return [TOOLS[name][0].to_wire() for name in TOOLS]


def market_tool_name(asset) -> str:
    return f"market.{str(asset).lower()}_snapshot"


def news_range_tool_name(asset) -> str:
    return f"news.{str(asset).lower()}_range"


class ToolSession:
    """One client's view of the tools, with its own call log.

    ``call`` is what in-process agents use; the JSON-RPC layer wraps it.
    """

    def __init__(self, store: Store, *, sink: Callable[[ToolCallLog], None] | None = None):
        self.store = store
        self.log: list[ToolCallLog] = []
        self._sink = sink
        self._lock = threading.Lock()

    def call(self, name: str, arguments: dict | None = None) -> ToolResult:
        """Run one tool. Rejected calls are logged too, then re-raised."""
        args = arguments if arguments is not None else {}
        rejected: InvalidParams | None = None
        try:
            if name not in TOOLS:
                raise InvalidParams(f"unknown tool {name!r}")
            if not isinstance(args, dict):
                raise InvalidParams("arguments must be an object")
            content, is_error = TOOLS[name][1](self.store, args), False
        except ToolError as exc:
            content, is_error = {"message": str(exc)}, True
        except InvalidParams as exc:
            rejected = exc
            content, is_error = {"message": str(exc)}, True
        try:
            arg_text = canonical_json(args)
        except (DomainError, TypeError, ValueError):
            arg_text = repr(args)
        with self._lock:
            entry = ToolCallLog(
                seq=len(self.log) + 1,
                tool=str(name),
                arguments=arg_text,
                result_digest=digest(content),
                is_error=is_error,
                wall_time=dt.datetime.now(dt.timezone.utc).isoformat(timespec="microseconds"),
            )
            self.log.append(entry)
        if self._sink is not None:
            self._sink(entry)
        if rejected is not None:
            raise rejected
        return ToolResult(is_error, content, entry.seq)

    def content(self, name: str, arguments: dict) -> Any:
        """Call a tool and return its content, or None on a tool-level error."""
        res = self.call(name, arguments)
        return None if res.is_error else res.content


def _error(id_: Any, code: int, message: str) -> dict:
    return {"jsonrpc": "2.0", "id": id_, "error": {"code": code, "message": message}}


class ToolServer:
    """JSON-RPC request handling for one session, strictly in arrival order."""

    def __init__(self, store: Store, *, sink: Callable[[ToolCallLog], None] | None = None):
        self.session = ToolSession(store, sink=sink)

    @property
    def call_log(self) -> list[ToolCallLog]:
        return self.session.log

    def handle(self, message: Any) -> dict | None:
        if not isinstance(message, dict):
            return _error(None, INVALID_REQUEST, "request must be a JSON object")
        is_notification = "id" not in message
        id_ = message.get("id")
        if message.get("jsonrpc") != "2.0" or not isinstance(message.get("method"), str):
            return None if is_notification else _error(id_ if _valid_id(id_) else None, INVALID_REQUEST, "invalid request envelope")
        if not _valid_id(id_):
            return _error(None, INVALID_REQUEST, "id must be a string, integer or null")
        method = message["method"]
        params = message.get("params", {})
        try:
            result = self._dispatch(method, params)
        except InvalidParams as exc:
            return None if is_notification else _error(id_, INVALID_PARAMS, str(exc))
        except _MethodNotFound:
            return None if is_notification else _error(id_, METHOD_NOT_FOUND, f"method not found: {method}")
        if is_notification:
            return None
        return {"jsonrpc": "2.0", "id": id_, "result": result}

    def _dispatch(self, method: str, params: Any) -> Any:
        if params is not None and not isinstance(params, dict):
            raise InvalidParams("params must be an object")
        params = params or {}
        if method == "tools/list":
            return {"tools": list_tools()}
        if method == "tools/call":
            name = params.get("name")
            if not isinstance(name, str):
                raise InvalidParams("params.name must be a tool name")
            res = self.session.call(name, params.get("arguments", {}))
            return {"is_error": res.is_error, "content": res.content}
        if method == "initialize":
            return {
                "protocolVersion": PROTOCOL_VERSION,
                "capabilities": {"tools": {}},
                "serverInfo": {"name": "pegscope", "version": __version__},
            }
        raise _MethodNotFound(method)

    def handle_line(self, line: str) -> str | None:
        """One input line in, at most one canonical response line out (no newline)."""
        try:
            message = json.loads(line)
        except json.JSONDecodeError:
            return canonical_json(_error(None, PARSE_ERROR, "parse error"))
        try:
            response = self.handle(message)
        except Exception as exc:  # noqa: BLE001 - the loop must survive handler bugs
            response = _error(message.get("id") if isinstance(message, dict) else None, INTERNAL_ERROR, f"internal error: {type(exc).__name__}")
        return None if response is None else canonical_json(response)


class _MethodNotFound(Exception):
    pass


def _valid_id(id_: Any) -> bool:
    return id_ is None or isinstance(id_, str) or (isinstance(id_, int) and not isinstance(id_, bool))


def serve(instream: TextIO, outstream: TextIO, store: Store, *, sink: Callable[[ToolCallLog], None] | None = None) -> ToolServer:
    """Answer requests from ``instream`` until it closes."""
    server = ToolServer(store, sink=sink)
    for line in instream:
        if not line.strip():
            continue
        out = server.handle_line(line)
        if out is not None:
            outstream.write(out + "\n")
            outstream.flush()
    return server


def serve_stdio(store: Store, *, sink: Callable[[ToolCallLog], None] | None = None) -> ToolServer:
    return serve(sys.stdin, sys.stdout, store, sink=sink)


def replay(lines: Iterable[str], store: Store) -> list[str]:
    """Run a scripted session in process and return the response lines."""
    server = ToolServer(store)
    out = []
    for line in lines:
        if line.strip():
            resp = server.handle_line(line)
            if resp is not None:
                out.append(resp)
    return out


class _TcpHandler(socketserver.StreamRequestHandler):
    def handle(self) -> None:
        server = ToolServer(self.server.store)  # type: ignore[attr-defined]
        for raw in self.rfile:
            line = raw.decode("utf-8")
            if not line.strip():
                continue
            out = server.handle_line(line)
            if out is not None:
                self.wfile.write(out.encode("utf-8") + b"\n")
                self.wfile.flush()


class TcpToolServer(socketserver.ThreadingTCPServer):
    """Same framing over TCP; one session per connection."""

    daemon_threads = True
    allow_reuse_address = True

    def __init__(self, address: tuple[str, int], store: Store):
        self.store = store
        super().__init__(address, _TcpHandler)
