"""Command-line entry point: ``pegscope <command> [flags]``.

Exit codes: 0 success, 1 usage error, 2 data error.
"""
from __future__ import annotations

import argparse
import datetime as dt
import json
import os
import sys
from pathlib import Path
from typing import Sequence

from pegscope import __version__
from pegscope.agents import Thresholds
from pegscope.errors import PegscopeError
from pegscope.mcp import TcpToolServer, serve
from pegscope.metrics import as_asset, parse_date
from pegscope.report import (
    analyze_store,
    event_study,
    export_figures,
    fixture_paths,
    ingest_paths,
    render_csv,
    render_text,
    write_json,
)
from pegscope.store import Store

EXIT_OK, EXIT_USAGE, EXIT_DATA = 0, 1, 2
DEFAULT_DATA_DIR = "pegscope-data"


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    # argparse exits with 2 on bad usage; 2 is reserved for data errors here
    def error(self, message: str):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


def _asset(text: str):
    try:
        return as_asset(text)
    except PegscopeError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from exc


def _date(text: str) -> dt.date:
    try:
        return parse_date(text)
    except PegscopeError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from exc


def _span(text: str) -> int:
    try:
        n = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"span must be an integer, got {text!r}") from None
    if n < 0:
        raise argparse.ArgumentTypeError("span must be >= 0")
    return n


def build_parser() -> argparse.ArgumentParser:
    shared = _Parser(add_help=False)
    shared.add_argument(
        "--data-dir",
        default=os.environ.get("PEGSCOPE_DATA_DIR", DEFAULT_DATA_DIR),
        help="store directory (default: $PEGSCOPE_DATA_DIR or ./%(default)s)",
    )
    shared.add_argument("--config", type=Path, help="threshold file (JSON); defaults to the shipped calibrated set")

    p = _Parser(prog="pegscope", description="Stablecoin attestation and market-stress analytics.")
    p.add_argument("--version", action="version", version=f"pegscope {__version__}")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    ing = sub.add_parser("ingest", parents=[shared], help="load market, attestation and news files into the store")
    ing.add_argument("--market-csv", type=Path, action="append", default=[], help="market snapshot CSV (repeatable)")
    ing.add_argument("--attestations", type=Path, action="append", default=[], help="attestation records JSON (repeatable)")
    ing.add_argument("--news", type=Path, action="append", default=[], help="news JSON lines (repeatable)")
    ing.add_argument("--fixtures", action="store_true", help="also load the shipped fixture files")

    srv = sub.add_parser("serve", parents=[shared], help="serve the five data tools as JSON-RPC over stdio")
    srv.add_argument("--call-log", type=Path, help="append one JSON line per tool call to this file")
    srv.add_argument("--tcp", metavar="HOST:PORT", help="listen on TCP instead of stdio")

    an = sub.add_parser("analyze", parents=[shared], help="run the pipeline for every stored attestation")
    an.add_argument("--asset", type=_asset, help="restrict to one asset (USDT, USDC)")
    an.add_argument("--format", choices=("csv", "text"), default="text")
    an.add_argument("--out-dir", type=Path, help="also write analysis_<asset>.csv, analysis.txt and skipped.json here")

    ev = sub.add_parser("event-study", parents=[shared], help="market and news picture around a date")
    ev.add_argument("--asset", type=_asset, required=True)
    ev.add_argument("--center", type=_date, required=True, help="window center (YYYY-MM-DD)")
    ev.add_argument("--span", type=_span, default=3, help="days either side of the center (default: 3)")
    ev.add_argument("--format", choices=("text", "json"), default="text")

    fig = sub.add_parser("export-figures", parents=[shared], help="write per-figure CSV series")
    fig.add_argument("--out-dir", type=Path, required=True)
    return p


def _thresholds(args) -> Thresholds:
    return Thresholds.load(args.config)


def _open_existing(args) -> Store:
    path = Path(args.data_dir)
    if not path.is_dir():
        raise PegscopeError(f"store directory {path} does not exist; run 'pegscope ingest' first")
    return Store(path)


def _sidecar(out_dir: Path, command: str, args, files: Sequence[str]) -> None:
    """Timestamps and provenance go here so primary outputs stay byte-stable."""
    write_json(
        out_dir / f"{command}.meta.json",
        {
            "command": command,
            "version": __version__,
            "generated_at": dt.datetime.now(dt.timezone.utc).isoformat(timespec="seconds"),
            "data_dir": str(args.data_dir),
            "config": str(args.config) if args.config else None,
            "files": list(files),
        },
    )


def cmd_ingest(args) -> int:
    market, att, news = list(args.market_csv), list(args.attestations), list(args.news)
    if args.fixtures:
        fx = fixture_paths()
        market += fx["market"]
        att += fx["attestation"]
        news += fx["news"]
    if not (market or att or news):
        raise UsageError("ingest: nothing to load; pass --market-csv, --attestations, --news or --fixtures")
    for p in (*market, *att, *news):
        if not Path(p).is_file():
            raise PegscopeError(f"no such file: {p}")
    summary = ingest_paths(Store(args.data_dir), market, att, news)
    for line in summary.lines():
        print(line)
    return EXIT_OK


def _call_log_sink(path: Path):
    fh = path.open("a", encoding="utf-8")

    def sink(entry) -> None:
        fh.write(json.dumps(entry.to_dict(), sort_keys=True) + "\n")
        fh.flush()

    return sink


def cmd_serve(args) -> int:
    store = Store(args.data_dir, readonly=True)
    sink = _call_log_sink(args.call_log) if args.call_log else None

    if args.tcp:
        host, _, port = args.tcp.rpartition(":")
        try:
            address = (host or "127.0.0.1", int(port))
        except ValueError:
            raise UsageError(f"--tcp expects HOST:PORT, got {args.tcp!r}") from None
        with TcpToolServer(address, store) as server:
            print(f"listening on {server.server_address[0]}:{server.server_address[1]}", file=sys.stderr)
            try:
                server.serve_forever()
            except KeyboardInterrupt:
                pass
        return EXIT_OK
    serve(sys.stdin, sys.stdout, store, sink=sink)
    return EXIT_OK


def _csv_blocks(report) -> str:
    """The analysis header has no asset column, so each asset gets its own block."""
    if len(report.assets) <= 1:
        return render_csv(report.rows)
    return "\n".join(f"# asset: {a}\n" + render_csv(report.for_asset(a).rows) for a in report.assets)


def cmd_analyze(args) -> int:
    th = _thresholds(args)
    path = Path(args.data_dir)
    store = Store(path) if path.is_dir() else Store()
    report = analyze_store(store, args.asset, thresholds=th)
    txt = render_text(report)
    sys.stdout.write(_csv_blocks(report) if args.format == "csv" else txt)
    if args.out_dir:
        out = args.out_dir
        out.mkdir(parents=True, exist_ok=True)
        files = []
        for a in report.assets or ([args.asset] if args.asset else []):
            name = f"analysis_{a.symbol.lower()}.csv"
            (out / name).write_text(render_csv(report.for_asset(a).rows), encoding="utf-8")
            files.append(name)
        (out / "analysis.txt").write_text(txt, encoding="utf-8")
        write_json(out / "skipped.json", [s.to_dict() for s in report.skipped])
        files += ["analysis.txt", "skipped.json"]
        _sidecar(out, "analyze", args, files)
    for s in report.skipped:
        print(f"skipped {s.asset} {s.report_date.isoformat()}: {s.reason}", file=sys.stderr)
    return EXIT_OK


def cmd_event_study(args) -> int:
    store = _open_existing(args)
    rep = event_study(store, args.asset, args.center, args.span, thresholds=_thresholds(args))
    if args.format == "json":
        sys.stdout.write(json.dumps(rep.to_dict(), indent=2, sort_keys=True) + "\n")
    else:
        sys.stdout.write(rep.render_text())
    return EXIT_OK


def cmd_export_figures(args) -> int:
    path = Path(args.data_dir)
    store = Store(path) if path.is_dir() else Store()
    report = analyze_store(store, thresholds=_thresholds(args))
    paths = export_figures(report, args.out_dir)
    _sidecar(args.out_dir, "export-figures", args, [p.name for p in paths])
    for p in paths:
        print(p)
    return EXIT_OK


COMMANDS = {
    "ingest": cmd_ingest,
    "serve": cmd_serve,
    "analyze": cmd_analyze,
    "event-study": cmd_event_study,
    "export-figures": cmd_export_figures,
}


def main(argv: Sequence[str] | None = None) -> int:
    try:
        args = build_parser().parse_args(argv)
        return COMMANDS[args.command](args)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    except (PegscopeError, OSError) as exc:
        print(f"pegscope: error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
