"""Batch analysis, event studies and figure series built on the store."""
from __future__ import annotations

import csv
import datetime as dt
import io
import json
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Iterable, Sequence

from pegscope.agents import (
    AnalysisOutcome,
    IndicatorFinding,
    ReasoningBackend,
    Thresholds,
    market_findings,
    run_pipeline,
)
from pegscope.errors import ContextError, PipelineAborted
from pegscope.ingest import load_attestation_records, load_market_csv, load_news
from pegscope.mcp import ToolSession, market_tool_name, news_range_tool_name
from pegscope.metrics import (
    ASSET_REGISTRY,
    AssetId,
    DisclosureExtract,
    MarketSnapshot,
    WindowAggregate,
    aggregate_window,
    as_asset,
    compute_alignment,
    parse_date,
)
from pegscope.store import RecordKey, Store

REPORT_COLUMNS = (
    "report_date",
    "price_usd",
    "mcap_usd",
    "volume_daily",
    "turnover_ratio",
    "peg_deviation_pct",
    "volatility_daily",
    "circulation_rep",
    "asset_value",
    "liability_value",
    "coverage_ratio",
    "implied_mcap",
    "supply_gap_pct",
    "analysis_outcome",
)

FIXTURE_FILES = {
    "market": ("market_usdt.csv", "market_usdc.csv", "events_market.csv"),
    "attestation": ("attestations_usdt.json", "attestations_usdc.json"),
    "news": ("news.jsonl",),
}


def fixture_path(name: str) -> Path:
    return Path(str(resources.files("pegscope.data").joinpath(name)))


def fixture_paths() -> dict[str, list[Path]]:
    return {ns: [fixture_path(n) for n in names] for ns, names in FIXTURE_FILES.items()}


@dataclass(frozen=True)
class IngestSummary:
    market: int
    attestation: int
    image_only: int
    news: int
    inserted: int

    def lines(self) -> list[str]:
        return [
            f"market: {self.market}",
            f"attestation: {self.attestation} extractable + {self.image_only} image-only",
            f"news: {self.news}",
        ]


def ingest_paths(store: Store, market_csv: Sequence[Path] = (), attestations: Sequence[Path] = (), news: Sequence[Path] = ()) -> IngestSummary:
    """Parse every file first, then write; a parse error leaves the store untouched."""
    snaps = [s for p in market_csv for s in load_market_csv(p)]
    recs = [r for p in attestations for r in load_attestation_records(p)]
    items = [n for p in news for n in load_news(p)]
    inserted = 0
    for s in snaps:
        inserted += store.put(RecordKey.market(s.asset, s.date), s.to_dict())
    for r in recs:
        inserted += store.put(RecordKey.attestation(r.asset, r.report_date), r.to_dict())
    for n in items:
        inserted += store.put(RecordKey.news(n.url), n.to_dict())
    att = [DisclosureExtract.from_dict(d) for d in store.values("attestation")]
    return IngestSummary(
        market=store.count("market"),
        attestation=sum(1 for a in att if a.extractable),
        image_only=sum(1 for a in att if not a.extractable),
        news=store.count("news"),
        inserted=inserted,
    )


def ingest_fixtures(store: Store) -> IngestSummary:
    p = fixture_paths()
    return ingest_paths(store, p["market"], p["attestation"], p["news"])


# -- analysis table -----------------------------------------------------------


@dataclass(frozen=True)
class ReportRow:
    asset: AssetId
    report_date: dt.date
    price_usd: float
    mcap_usd: float
    volume_daily: float
    turnover_ratio: float
    peg_deviation_pct: float
    volatility_daily: float
    circulation_rep: float
    asset_value: float
    liability_value: float
    coverage_ratio: float
    implied_mcap: float
    supply_gap_pct: float
    analysis_outcome: str

    @classmethod
    def build(cls, extract: DisclosureExtract, snapshot: MarketSnapshot, label: str) -> "ReportRow":
        der = snapshot.derived()
        al = compute_alignment(snapshot, extract)
        return cls(
            asset=extract.asset,
            report_date=extract.report_date,
            price_usd=snapshot.price_usd,
            mcap_usd=snapshot.mcap_usd,
            volume_daily=snapshot.volume_daily,
            turnover_ratio=der.turnover_ratio,
            peg_deviation_pct=der.peg_deviation_pct,
            volatility_daily=snapshot.volatility_daily,
            circulation_rep=extract.circulation_rep,
            asset_value=extract.asset_value,
            liability_value=extract.liability_value,
            coverage_ratio=al.coverage_ratio,
            implied_mcap=al.implied_mcap,
            supply_gap_pct=al.supply_gap_pct,
            analysis_outcome=label,
        )

    def values(self) -> list:
        return [getattr(self, c) if c != "report_date" else self.report_date.isoformat() for c in REPORT_COLUMNS]


@dataclass(frozen=True)
class SkippedRow:
    asset: AssetId
    report_date: dt.date
    source_id: str
    stage: str
    reason: str

    def to_dict(self) -> dict:
        return {
            "asset": self.asset.symbol,
            "report_date": self.report_date.isoformat(),
            "source_id": self.source_id,
            "stage": self.stage,
            "reason": self.reason,
        }


@dataclass
class AnalysisReport:
    rows: list[ReportRow] = field(default_factory=list)
    skipped: list[SkippedRow] = field(default_factory=list)
    outcomes: list[AnalysisOutcome] = field(default_factory=list)

    def for_asset(self, asset: AssetId | str) -> "AnalysisReport":
        a = as_asset(asset)
        return AnalysisReport(
            [r for r in self.rows if r.asset == a],
            [s for s in self.skipped if s.asset == a],
            [o for o in self.outcomes if o.asset == a],
        )

    @property
    def assets(self) -> list[AssetId]:
        return sorted({r.asset for r in self.rows} | {s.asset for s in self.skipped})


def analyze_store(
    store: Store,
    asset: AssetId | str | None = None,
    *,
    thresholds: Thresholds | None = None,
    backend: ReasoningBackend | None = None,
) -> AnalysisReport:
    """Run the pipeline for every stored attestation of the selected asset(s).

    Rows come back sorted by (asset, report_date). Aborted runs, such as
    image-only attestations, land in ``skipped`` and the batch continues.
    """
    assets = [as_asset(asset)] if asset is not None else [AssetId(s) for s in sorted(ASSET_REGISTRY)]
    report = AnalysisReport()
    for a in sorted(assets):
        for rec in store.range("attestation", a, dt.date.min, dt.date.max):
            ex = DisclosureExtract.from_dict(rec)
            try:
                outcome, _ = run_pipeline(store, a, ex.report_date, backend, thresholds=thresholds)
            except PipelineAborted as exc:
                report.skipped.append(SkippedRow(a, ex.report_date, ex.source_id, exc.stage, exc.reason))
                continue
            snap = MarketSnapshot.from_dict(store.get(RecordKey.market(a, ex.report_date)))
            report.rows.append(ReportRow.build(ex, snap, outcome.label))
            report.outcomes.append(outcome)
    return report


def render_csv(rows: Iterable[ReportRow]) -> str:
    """Full-precision CSV with the fixed analysis header."""
    out = io.StringIO()
    w = csv.writer(out, lineterminator="\n")
    w.writerow(REPORT_COLUMNS)
    for r in rows:
        w.writerow([v if isinstance(v, str) else repr(float(v)) for v in r.values()])
    return out.getvalue()


def sci4(x: float) -> str:
    """Four significant digits in scientific notation, e.g. ``9.996E-01``."""
    return f"{x:.3E}"


def render_text(report: AnalysisReport) -> str:
    blocks = []
    for a in report.assets:
        sub = report.for_asset(a)
        table = [list(REPORT_COLUMNS)]
        for r in sub.rows:
            table.append([v if isinstance(v, str) else sci4(v) for v in r.values()])
        widths = [max(len(row[i]) for row in table) for i in range(len(REPORT_COLUMNS))]
        lines = [f"{a} data overview and analysis outcomes"]
        for row in table:
            lines.append("  ".join(c.rjust(w) if i else c.ljust(w) for i, (c, w) in enumerate(zip(row, widths))).rstrip())
        if sub.skipped:
            lines.append("skipped:")
            lines.extend(f"  {s.report_date.isoformat()} {s.source_id}: {s.stage} stage, {s.reason}" for s in sub.skipped)
        blocks.append("\n".join(lines))
    return "\n\n".join(blocks) + ("\n" if blocks else "")


# -- figure series ------------------------------------------------------------

FIGURES = {
    "fig2_scale_liquidity.csv": ("mcap_usd", "volume_daily"),
    "fig3_coverage.csv": ("coverage_ratio",),
    "fig4_liquidity_peg.csv": ("turnover_ratio", "peg_deviation_pct"),
}


def figure_series(report: AnalysisReport) -> dict[str, str]:
    """CSV text per figure file: one line per (asset, report_date)."""
    out = {}
    for name, cols in FIGURES.items():
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(("asset", "report_date", *cols))
        for r in sorted(report.rows, key=lambda r: (r.asset.symbol, r.report_date)):
            w.writerow([r.asset.symbol, r.report_date.isoformat(), *(repr(float(getattr(r, c))) for c in cols)])
        out[name] = buf.getvalue()
    return out


def export_figures(report: AnalysisReport, out_dir: str | Path) -> list[Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = []
    for name, text in figure_series(report).items():
        p = out / name
        p.write_text(text, encoding="utf-8")
        paths.append(p)
    return paths


# -- event study --------------------------------------------------------------


@dataclass
class EventStudyReport:
    asset: AssetId
    center: dt.date
    span: int
    window: WindowAggregate
    core_window: WindowAggregate
    days: list[dict]
    min_price: float
    max_price: float
    findings: list[IndicatorFinding]
    news: list[dict]

    def to_dict(self) -> dict:
        return {
            "asset": self.asset.symbol,
            "center": self.center.isoformat(),
            "span": self.span,
            "window": self.window.to_dict(),
            "core_window": self.core_window.to_dict(),
            "min_price": self.min_price,
            "max_price": self.max_price,
            "days": self.days,
            "findings": [f.to_dict() for f in self.findings],
            "news": self.news,
        }

    def render_text(self) -> str:
        w, c = self.window, self.core_window
        lines = [
            f"{self.asset} event window {self.center.isoformat()} +/- {self.span} days ({w.days_present} days present)",
            f"  mean_price={w.mean_price:.6g} min_price={self.min_price:.6g} max_price={self.max_price:.6g}",
            f"  max_abs_peg_dev_pct={w.max_abs_peg_dev_pct:.4g} mean_turnover={w.mean_turnover:.4g} mcap_change={w.mcap_change:+.4g}",
            f"  core window +/- {c.span_days} day: mcap_change={c.mcap_change:+.4g} over {c.days_present} days",
            "  date        price      mcap_usd    volume      turnover  peg_dev_%  volatility",
        ]
        for d in self.days:
            lines.append(
                f"  {d['date']}  {d['price_usd']:<9.6g}  {d['mcap_usd']:.4E}  {d['volume_daily']:.4E}  {d['turnover_ratio']:<8.4g}  {d['peg_deviation_pct']:<+9.4g}  {d['volatility_daily']:.4g}"
            )
        lines.append("  findings (center day):")
        lines.extend(f"    {f.indicator.value}: {f.severity.label} ({f.detail}; persistence {f.persistence_days} days)" for f in self.findings)
        lines.append(f"  news ({len(self.news)}):")
        lines.extend(f"    {n['date']} {n['headline']} <{n['url']}>" for n in self.news)
        return "\n".join(lines) + "\n"


def event_study(
    store: Store,
    asset: AssetId | str,
    center,
    span: int = 3,
    *,
    thresholds: Thresholds | None = None,
    tools: ToolSession | None = None,
) -> EventStudyReport:
    """Market and news picture of ``center +/- span`` days, fetched through the tools.

    ``core_window`` is the +/-1 day sub-window used for short-horizon
    capitalisation changes.
    """
    asset, center = as_asset(asset), parse_date(center)
    if span < 0:
        raise ContextError(f"span must be >= 0, got {span}")
    th = thresholds or Thresholds()
    tools = tools or ToolSession(store)
    days = [center + dt.timedelta(days=k) for k in range(-span, span + 1)]
    snaps = []
    for d in days:
        c = tools.content(market_tool_name(asset), {"date": d.isoformat()})
        if c is not None:
            snaps.append(MarketSnapshot(c["asset"], c["date"], c["price_usd"], c["mcap_usd"], c["volume_usd"], c["volatility_daily"]))
    by_date = {s.date: s for s in snaps}
    if center not in by_date:
        raise ContextError(f"no snapshot for ({asset}, {center.isoformat()}) at the window center")
    window = aggregate_window(snaps, center, span)
    core = aggregate_window(snaps, center, min(span, 1))
    rows = []
    for s in snaps:
        der = s.derived()
        rows.append({**s.to_dict(), **der.to_dict()})
    news = tools.content(news_range_tool_name(asset), {"start": days[0].isoformat(), "end": days[-1].isoformat()}) or []
    return EventStudyReport(
        asset=asset,
        center=center,
        span=span,
        window=window,
        core_window=core,
        days=rows,
        min_price=min(s.price_usd for s in snaps),
        max_price=max(s.price_usd for s in snaps),
        findings=market_findings(by_date[center], snaps, th),
        news=news,
    )


def write_json(path: Path, value) -> None:
    path.write_text(json.dumps(value, indent=2, sort_keys=True) + "\n", encoding="utf-8")
