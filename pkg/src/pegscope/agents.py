"""Disclosure, event and analysis agents plus the three-level classifier.

A run walks Thought -> Code -> Observation cycles for each agent and ends
with one Finalize step. Market data reach the agents only through a
:class:`~pegscope.mcp.ToolSession`, so every value in the justification can
be traced to a logged tool call.
"""
from __future__ import annotations

import dataclasses
import datetime as dt
import enum
import hashlib
import json
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Callable, Mapping, Protocol, Sequence

from pegscope.errors import (
    AnalysisError,
    ConfigurationError,
    ContextError,
    DomainError,
    ExtractionError,
    NotFoundError,
    PipelineAborted,
)
from pegscope.ingest import DisclosureDocument, extract_disclosure
from pegscope.mcp import ToolSession, market_tool_name
from pegscope.metrics import (
    AssetId,
    DisclosureExtract,
    MarketDerived,
    MarketSnapshot,
    WindowAggregate,
    aggregate_window,
    as_asset,
    compute_alignment,
    parse_date,
)
from pegscope.store import RecordKey, Store, digest

WINDOW_SPAN_DAYS = 3


# -- configuration ------------------------------------------------------------


@dataclass(frozen=True)
class Thresholds:
    coverage_abnormal: float = 1.0
    gap_suspicious: float = 1.0
    gap_abnormal: float = 3.0
    turnover_abnormal: float = 0.70
    turnover_suspicious: float = 0.45
    volatility_suspicious: float = 0.25
    peg_suspicious: float = 0.5
    peg_abnormal: float = 2.0
    staleness_days: int = 120

    def __post_init__(self) -> None:
        if self.gap_suspicious > self.gap_abnormal:
            raise ConfigurationError("gap_suspicious must not exceed gap_abnormal")
        if self.turnover_suspicious > self.turnover_abnormal:
            raise ConfigurationError("turnover_suspicious must not exceed turnover_abnormal")
        if self.peg_suspicious > self.peg_abnormal:
            raise ConfigurationError("peg_suspicious must not exceed peg_abnormal")
        for f in dataclasses.fields(self):
            if getattr(self, f.name) < 0:
                raise ConfigurationError(f"{f.name} must be >= 0")

    @classmethod
    def from_mapping(cls, data: Mapping) -> "Thresholds":
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = sorted(set(data) - names)
        if unknown:
            raise ConfigurationError(f"unknown threshold keys {unknown}")
        try:
            return cls(**data)
        except TypeError as exc:
            raise ConfigurationError(str(exc)) from exc

    @classmethod
    def load(cls, path: str | Path | None = None) -> "Thresholds":
        """Read a threshold file; ``None`` loads the shipped calibrated set."""
        if path is None:
            text = resources.files("pegscope.data").joinpath("thresholds.json").read_text(encoding="utf-8")
        else:
            try:
                text = Path(path).read_text(encoding="utf-8")
            except OSError as exc:
                raise ConfigurationError(f"cannot read threshold file {path}: {exc}") from exc
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigurationError(f"threshold file is not JSON: {exc}") from exc
        if not isinstance(data, dict):
            raise ConfigurationError("threshold file must hold a JSON object")
        return cls.from_mapping(data)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @property
    def digest(self) -> str:
        return digest(self.to_dict())[:12]


# -- outcome types ------------------------------------------------------------


class Indicator(str, enum.Enum):
    COVERAGE = "coverage"
    ATTESTATION_QUALITY = "attestation_quality"
    SUPPLY_GAP = "supply_gap"
    LIQUIDITY_STRESS = "liquidity_stress"
    PEG_STRESS = "peg_stress"

    @property
    def order(self) -> int:
        return list(Indicator).index(self)


class Severity(enum.IntEnum):
    NORMAL = 0
    SUSPICIOUS = 1
    ABNORMAL = 2

    @property
    def label(self) -> str:
        return self.name.lower()


@dataclass(frozen=True)
class IndicatorFinding:
    indicator: Indicator
    severity: Severity
    magnitude: float
    persistence_days: int
    detail: str

    def __post_init__(self) -> None:
        if self.severity is Severity.NORMAL and self.magnitude != 0:
            raise DomainError("a normal finding must have zero magnitude")
        if self.persistence_days < 0:
            raise DomainError("persistence_days must be >= 0")

    def to_dict(self) -> dict:
        return {
            "indicator": self.indicator.value,
            "severity": self.severity.label,
            "magnitude": self.magnitude,
            "persistence_days": self.persistence_days,
            "detail": self.detail,
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "IndicatorFinding":
        return cls(Indicator(d["indicator"]), Severity[d["severity"].upper()], d["magnitude"], d["persistence_days"], d["detail"])


def rank_findings(findings: Sequence[IndicatorFinding]) -> list[IndicatorFinding]:
    return sorted(findings, key=lambda f: (-int(f.severity), -f.magnitude, f.indicator.order))


@dataclass(frozen=True)
class AnalysisOutcome:
    asset: AssetId
    report_date: dt.date
    label: str
    findings: tuple[IndicatorFinding, ...]
    scope: int
    justification: str

    @property
    def severity(self) -> Severity:
        return Severity[self.label.upper()]

    def to_dict(self) -> dict:
        return {
            "asset": self.asset.symbol,
            "report_date": self.report_date.isoformat(),
            "label": self.label,
            "findings": [f.to_dict() for f in self.findings],
            "scope": self.scope,
            "justification": self.justification,
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "AnalysisOutcome":
        return cls(
            as_asset(d["asset"]),
            parse_date(d["report_date"]),
            d["label"],
            tuple(IndicatorFinding.from_dict(f) for f in d["findings"]),
            d["scope"],
            d["justification"],
        )


class Stage(str, enum.Enum):
    THOUGHT = "Thought"
    CODE = "Code"
    OBSERVATION = "Observation"
    FINALIZE = "Finalize"


@dataclass(frozen=True)
class TraceStep:
    stage: Stage
    content: str
    refs: tuple[int, ...] = ()

    def to_dict(self) -> dict:
        return {"stage": self.stage.value, "content": self.content, "refs": list(self.refs)}


@dataclass
class ReasoningTrace:
    run_id: str
    asset: AssetId
    report_date: dt.date
    steps: list[TraceStep] = field(default_factory=list)

    def _add(self, stage: Stage, content: str, refs: Sequence[int] = ()) -> None:
        if self.finalized:
            raise DomainError("trace already finalized")
        self.steps.append(TraceStep(stage, content, tuple(refs)))

    def thought(self, content: str) -> None:
        self._add(Stage.THOUGHT, content)

    def code(self, content: str) -> None:
        self._add(Stage.CODE, content)

    def observation(self, content: str, refs: Sequence[int] = ()) -> None:
        self._add(Stage.OBSERVATION, content, refs)

    def finalize(self, content: str, refs: Sequence[int] = ()) -> None:
        # a cycle interrupted mid-way is closed off before finalizing
        while self.steps and self.steps[-1].stage is not Stage.OBSERVATION:
            nxt = Stage.CODE if self.steps[-1].stage is Stage.THOUGHT else Stage.OBSERVATION
            self.steps.append(TraceStep(nxt, "(no output: run stopped)"))
        self._add(Stage.FINALIZE, content, refs)

    @property
    def finalized(self) -> bool:
        return bool(self.steps) and self.steps[-1].stage is Stage.FINALIZE

    def to_dict(self) -> dict:
        return {
            "run_id": self.run_id,
            "asset": self.asset.symbol,
            "report_date": self.report_date.isoformat(),
            "steps": [s.to_dict() for s in self.steps],
        }


def check_trace(trace: ReasoningTrace | Mapping) -> None:
    """Raise DomainError unless the steps are (Thought, Code, Observation)* Finalize."""
    steps = trace["steps"] if isinstance(trace, Mapping) else [s.to_dict() for s in trace.steps]
    stages = [s["stage"] for s in steps]
    if not stages or stages[-1] != Stage.FINALIZE.value:
        raise DomainError("trace must end with Finalize")
    if stages.count(Stage.FINALIZE.value) != 1:
        raise DomainError("trace must contain exactly one Finalize")
    body = stages[:-1]
    cycle = [Stage.THOUGHT.value, Stage.CODE.value, Stage.OBSERVATION.value]
    if len(body) % 3 or any(body[i] != cycle[i % 3] for i in range(len(body))):
        raise DomainError(f"stages do not form Thought/Code/Observation cycles: {stages}")


# -- market context -----------------------------------------------------------


@dataclass(frozen=True)
class EventContext:
    asset: AssetId
    report_date: dt.date
    window: WindowAggregate
    report_day_snapshot: MarketSnapshot
    report_day_derived: MarketDerived
    daily: tuple[MarketSnapshot, ...]
    report_day_ref: int = 0
    refs: tuple[int, ...] = ()

    def __post_init__(self) -> None:
        if self.window.center_date != self.report_date or self.window.span_days != WINDOW_SPAN_DAYS:
            raise DomainError("event window must be centred on the report date with a 3-day span")


def build_context(
    asset: AssetId | str,
    report_date,
    daily: Sequence[MarketSnapshot],
    *,
    report_day_ref: int = 0,
    refs: Sequence[int] = (),
) -> EventContext:
    """Assemble an :class:`EventContext` from already-fetched daily snapshots."""
    asset, report_date = as_asset(asset), parse_date(report_date)
    by_date = {s.date: s for s in daily}
    if report_date not in by_date:
        raise ContextError(f"no report-day snapshot for ({asset}, {report_date.isoformat()})")
    day = by_date[report_date]
    window = aggregate_window(daily, report_date, WINDOW_SPAN_DAYS)
    lo = report_date - dt.timedelta(days=WINDOW_SPAN_DAYS)
    hi = report_date + dt.timedelta(days=WINDOW_SPAN_DAYS)
    inside = tuple(sorted((s for s in daily if lo <= s.date <= hi), key=lambda s: s.date))
    return EventContext(asset, report_date, window, day, day.derived(), inside, report_day_ref, tuple(refs))


# -- indicator rules ----------------------------------------------------------

RuleResult = tuple[Severity, float, str]


def _exceed(observed: float, threshold: float) -> float:
    return (observed - threshold) / threshold if threshold else observed


def rule_coverage(coverage: float, th: Thresholds) -> RuleResult:
    if coverage < th.coverage_abnormal:
        mag = (th.coverage_abnormal - coverage) / th.coverage_abnormal if th.coverage_abnormal else 0.0
        return Severity.ABNORMAL, mag, f"coverage_ratio {coverage:.4g} < {th.coverage_abnormal:g} (reserve deficit)"
    return Severity.NORMAL, 0.0, f"coverage_ratio {coverage:.4g} >= {th.coverage_abnormal:g}"


def rule_attestation_quality(extractable: bool, age_days: int, th: Thresholds) -> RuleResult:
    if not extractable:
        return Severity.ABNORMAL, 1.0, "attestation not machine-extractable"
    if age_days > th.staleness_days:
        return Severity.ABNORMAL, _exceed(age_days, th.staleness_days), f"attestation is {age_days} days old > {th.staleness_days}"
    return Severity.NORMAL, 0.0, f"attestation age {age_days} days <= {th.staleness_days}"


def rule_supply_gap(gap_pct: float, th: Thresholds) -> RuleResult:
    g = abs(gap_pct)
    if g > th.gap_abnormal:
        return Severity.ABNORMAL, _exceed(g, th.gap_abnormal), f"|supply_gap_pct| {g:.4g} > {th.gap_abnormal:g}"
    if g > th.gap_suspicious:
        return Severity.SUSPICIOUS, _exceed(g, th.gap_suspicious), f"|supply_gap_pct| {g:.4g} > {th.gap_suspicious:g}"
    return Severity.NORMAL, 0.0, f"|supply_gap_pct| {g:.4g} <= {th.gap_suspicious:g}"


def rule_liquidity(turnover: float, volatility: float, th: Thresholds) -> RuleResult:
    if turnover > th.turnover_abnormal:
        return Severity.ABNORMAL, _exceed(turnover, th.turnover_abnormal), f"turnover_ratio {turnover:.4g} > {th.turnover_abnormal:g}"
    if turnover > th.turnover_suspicious and volatility > th.volatility_suspicious:
        return (
            Severity.SUSPICIOUS,
            _exceed(turnover, th.turnover_suspicious),
            f"turnover_ratio {turnover:.4g} > {th.turnover_suspicious:g} with volatility_daily {volatility:.4g} > {th.volatility_suspicious:g}",
        )
    return Severity.NORMAL, 0.0, f"turnover_ratio {turnover:.4g}, volatility_daily {volatility:.4g} within limits"


def rule_peg(peg_pct: float, th: Thresholds) -> RuleResult:
    p = abs(peg_pct)
    if p > th.peg_abnormal:
        return Severity.ABNORMAL, _exceed(p, th.peg_abnormal), f"|peg_deviation_pct| {p:.4g} > {th.peg_abnormal:g}"
    if p > th.peg_suspicious:
        return Severity.SUSPICIOUS, _exceed(p, th.peg_suspicious), f"|peg_deviation_pct| {p:.4g} > {th.peg_suspicious:g}"
    return Severity.NORMAL, 0.0, f"|peg_deviation_pct| {p:.4g} <= {th.peg_suspicious:g}"


def _rules(extract: DisclosureExtract, as_of: dt.date, th: Thresholds) -> dict[Indicator, Callable[[MarketSnapshot], RuleResult]]:
    age = (as_of - extract.report_date).days

    def coverage(_: MarketSnapshot) -> RuleResult:
        return rule_coverage(extract.asset_value / extract.liability_value, th)

    def quality(_: MarketSnapshot) -> RuleResult:
        return rule_attestation_quality(extract.extractable, age, th)

    def gap(s: MarketSnapshot) -> RuleResult:
        return rule_supply_gap(compute_alignment(s, extract).supply_gap_pct, th)

    def liquidity(s: MarketSnapshot) -> RuleResult:
        return rule_liquidity(s.derived().turnover_ratio, s.volatility_daily, th)

    def peg(s: MarketSnapshot) -> RuleResult:
        return rule_peg(s.derived().peg_deviation_pct, th)

    return {
        Indicator.COVERAGE: coverage,
        Indicator.ATTESTATION_QUALITY: quality,
        Indicator.SUPPLY_GAP: gap,
        Indicator.LIQUIDITY_STRESS: liquidity,
        Indicator.PEG_STRESS: peg,
    }


def market_findings(snapshot: MarketSnapshot, daily: Sequence[MarketSnapshot], th: Thresholds) -> list[IndicatorFinding]:
    """Liquidity and peg findings for one day, with persistence over ``daily``.

    These need no attestation, which is what event studies use.
    """
    out = []
    for ind, rule in (
        (Indicator.LIQUIDITY_STRESS, lambda s: rule_liquidity(s.derived().turnover_ratio, s.volatility_daily, th)),
        (Indicator.PEG_STRESS, lambda s: rule_peg(s.derived().peg_deviation_pct, th)),
    ):
        sev, mag, detail = rule(snapshot)
        persist = sum(1 for d in daily if rule(d)[0] > Severity.NORMAL) if sev > Severity.NORMAL else 0
        out.append(IndicatorFinding(ind, sev, mag, persist, detail))
    return rank_findings(out)


def _fmt(x: float, signed: bool = False) -> str:
    return f"{x:+.4g}" if signed else f"{x:.4g}"


def render_justification(extract: DisclosureExtract, ctx: EventContext, label: str, findings: Sequence[IndicatorFinding]) -> str:
    align = compute_alignment(ctx.report_day_snapshot, extract)
    snap, der = ctx.report_day_snapshot, ctx.report_day_derived
    triggered = [f for f in findings if f.severity > Severity.NORMAL]
    lines = [
        f"{extract.asset} attestation of {extract.report_date.isoformat()} classified {label}.",
        (
            f"Evidence: coverage_ratio={_fmt(align.coverage_ratio)}, supply_gap_pct={_fmt(align.supply_gap_pct, True)}, "
            f"turnover_ratio={_fmt(der.turnover_ratio)}, volatility_daily={_fmt(snap.volatility_daily)}, "
            f"peg_deviation_pct={_fmt(der.peg_deviation_pct, True)}, implied_mcap={_fmt(align.implied_mcap)}."
        ),
        f"Window: {ctx.window.days_present} of {2 * ctx.window.span_days + 1} days present, mean_turnover={_fmt(ctx.window.mean_turnover)}, max_abs_peg_dev_pct={_fmt(ctx.window.max_abs_peg_dev_pct)}.",
    ]
    if triggered:
        parts = [
            f"{f.indicator.value} {f.severity.label} ({f.detail}; magnitude {f.magnitude:.3g}; persistence {f.persistence_days}/{ctx.window.days_present} days)"
            for f in triggered
        ]
        lines.append("Triggered: " + "; ".join(parts) + ".")
    else:
        lines.append("Triggered: none.")
    return "\n".join(lines)


def classify(
    extract: DisclosureExtract,
    ctx: EventContext,
    thresholds: Thresholds | None = None,
    *,
    as_of: dt.date | None = None,
    order: Sequence[Indicator] | None = None,
) -> AnalysisOutcome:
    """Apply the five indicator rules to report-day values.

    The label is the worst finding; the window only feeds persistence.
    ``order`` permutes rule evaluation and exists for testing that ranking
    does not depend on it.
    """
    if not extract.extractable:
        raise DomainError(f"cannot classify non-extractable attestation {extract.source_id!r}; filter it first")
    if extract.asset != ctx.asset:
        raise DomainError(f"asset mismatch: extract {extract.asset}, context {ctx.asset}")
    th = thresholds or Thresholds()
    as_of = as_of or ctx.report_date
    rules = _rules(extract, as_of, th)
    findings = []
    for ind in order or list(Indicator):
        rule = rules[ind]
        sev, mag, detail = rule(ctx.report_day_snapshot)
        persist = sum(1 for d in ctx.daily if rule(d)[0] > Severity.NORMAL) if sev > Severity.NORMAL else 0
        findings.append(IndicatorFinding(ind, sev, mag, persist, detail))
    ranked = rank_findings(findings)
    label = Severity(max(int(f.severity) for f in ranked)).label
    return AnalysisOutcome(
        asset=extract.asset,
        report_date=extract.report_date,
        label=label,
        findings=tuple(ranked),
        scope=sum(1 for f in ranked if f.severity > Severity.NORMAL),
        justification=render_justification(extract, ctx, label, ranked),
    )


# -- reasoning backends -------------------------------------------------------


class ReasoningBackend(Protocol):
    name: str

    def analyze(self, extract: DisclosureExtract, ctx: EventContext, tools: ToolSession) -> AnalysisOutcome: ...


@dataclass(frozen=True)
class DeterministicBackend:
    """Built-in backend: the rule classifier plus a templated justification."""

    thresholds: Thresholds = field(default_factory=Thresholds)
    name: str = "deterministic"

    def analyze(self, extract: DisclosureExtract, ctx: EventContext, tools: ToolSession) -> AnalysisOutcome:
        return classify(extract, ctx, self.thresholds)


# -- agents -------------------------------------------------------------------


def _run_id(asset: AssetId, report_date: dt.date, backend_name: str, th: Thresholds) -> str:
    text = f"{asset.symbol}|{report_date.isoformat()}|{backend_name}|{th.digest}"
    return hashlib.sha256(text.encode()).hexdigest()[:16]


def agent_disclosure(doc: DisclosureDocument, trace: ReasoningTrace | None = None) -> DisclosureExtract:
    """Extract reserve figures; image-only documents come back non-extractable."""
    t = trace or ReasoningTrace("adhoc", doc.asset, doc.report_date)
    t.thought(f"Read the {doc.media_kind.value} attestation {doc.source_id!r} for {doc.asset} dated {doc.report_date.isoformat()} and extract reserve and liability figures.")
    t.code(f"extract_disclosure(DisclosureDocument(source_id={doc.source_id!r}, media_kind={doc.media_kind.value!r}))")
    try:
        ex = extract_disclosure(doc)
    except ExtractionError as exc:
        t.observation(f"extraction failed: {exc}")
        raise
    if not ex.extractable:
        t.observation(f"document {doc.source_id!r} is image-only; no numeric fields, excluded from classification")
    else:
        t.observation(
            f"circulation_rep={ex.circulation_rep:.6g}, asset_value={ex.asset_value:.6g}, liability_value={ex.liability_value:.6g}, auditor={ex.auditor or 'n/a'}"
        )
    return ex


def agent_event(tools: ToolSession, asset: AssetId | str, report_date, trace: ReasoningTrace | None = None) -> EventContext:
    """Build the +/-3 day market context through market tool calls only."""
    asset, report_date = as_asset(asset), parse_date(report_date)
    t = trace or ReasoningTrace("adhoc", asset, report_date)
    tool = market_tool_name(asset)
    t.thought(f"Fetch {asset} market snapshots for the {2 * WINDOW_SPAN_DAYS + 1}-day window around {report_date.isoformat()}.")
    days = [report_date + dt.timedelta(days=k) for k in range(-WINDOW_SPAN_DAYS, WINDOW_SPAN_DAYS + 1)]
    t.code("; ".join(f"{tool}(date={d.isoformat()!r})" for d in days))
    daily, refs, report_ref = [], [], 0
    for d in days:
        res = tools.call(tool, {"date": d.isoformat()})
        refs.append(res.seq)
        if res.is_error:
            continue
        c = res.content
        daily.append(MarketSnapshot(c["asset"], c["date"], c["price_usd"], c["mcap_usd"], c["volume_usd"], c["volatility_daily"]))
        if d == report_date:
            report_ref = res.seq
    if not report_ref:
        t.observation(f"report-day snapshot for {report_date.isoformat()} is missing", refs)
        raise ContextError(f"no report-day snapshot for ({asset}, {report_date.isoformat()})")
    ctx = build_context(asset, report_date, daily, report_day_ref=report_ref, refs=refs)
    w, der = ctx.window, ctx.report_day_derived
    t.observation(
        f"{w.days_present}/{2 * w.span_days + 1} days present; report day price={ctx.report_day_snapshot.price_usd:.6g}, "
        f"turnover_ratio={der.turnover_ratio:.4g}, peg_deviation_pct={der.peg_deviation_pct:+.4g}; "
        f"window mean_turnover={w.mean_turnover:.4g}, mcap_change={w.mcap_change:+.4g}",
        refs,
    )
    return ctx


def agent_analysis(
    extract: DisclosureExtract,
    ctx: EventContext,
    backend: ReasoningBackend,
    tools: ToolSession,
    trace: ReasoningTrace | None = None,
) -> AnalysisOutcome:
    """Run the backend and close the trace with a Finalize step carrying the label."""
    t = trace or ReasoningTrace("adhoc", ctx.asset, ctx.report_date)
    t.thought("Bind the disclosure figures to the market context, rank indicators and classify.")
    t.code(f"{backend.name}.analyze(extract={extract.source_id!r}, context=({ctx.asset}, {ctx.report_date.isoformat()}))")
    try:
        outcome = backend.analyze(extract, ctx, tools)
    except Exception as exc:
        t.observation(f"backend {backend.name!r} failed: {type(exc).__name__}: {exc}")
        t.finalize(f"aborted at analysis stage: {exc}")
        raise AnalysisError(f"backend {backend.name!r} failed: {exc}", trace=t) from exc
    ranking = ", ".join(f"{f.indicator.value}={f.severity.label}" for f in outcome.findings)
    t.observation(f"ranked findings: {ranking}; scope={outcome.scope}", (ctx.report_day_ref,))
    t.finalize(f"label={outcome.label}\n{outcome.justification}\nsource={extract.source_id}", tuple(dict.fromkeys((ctx.report_day_ref, *ctx.refs))))
    return outcome


class AuditRun:
    """One pipeline run: its tool session, backend and reasoning trace."""

    def __init__(self, store: Store, asset: AssetId | str, report_date, *, backend: ReasoningBackend | None = None, thresholds: Thresholds | None = None):
        self.store = store
        self.asset = as_asset(asset)
        self.report_date = parse_date(report_date)
        self.thresholds = thresholds or getattr(backend, "thresholds", None) or Thresholds()
        self.backend = backend or DeterministicBackend(self.thresholds)
        self.tools = ToolSession(store)
        self.trace = ReasoningTrace(_run_id(self.asset, self.report_date, self.backend.name, self.thresholds), self.asset, self.report_date)

    def agent_disclosure(self, doc: DisclosureDocument) -> DisclosureExtract:
        return agent_disclosure(doc, self.trace)

    def agent_event(self, asset: AssetId | str, report_date) -> EventContext:
        return agent_event(self.tools, asset, report_date, self.trace)

    def agent_analysis(self, extract: DisclosureExtract, ctx: EventContext, backend: ReasoningBackend | None = None) -> AnalysisOutcome:
        return agent_analysis(extract, ctx, backend or self.backend, self.tools, self.trace)


def _outcome_key(asset: AssetId, report_date: dt.date, backend: str, th: Thresholds, namespace: str) -> RecordKey:
    return RecordKey(namespace, (asset.symbol, report_date.isoformat(), backend, th.digest))


def load_attestation(store: Store, asset: AssetId | str, report_date) -> DisclosureExtract:
    return DisclosureExtract.from_dict(store.get(RecordKey.attestation(asset, report_date)))


def run_pipeline(
    store: Store,
    asset: AssetId | str,
    report_date,
    backend: ReasoningBackend | None = None,
    *,
    thresholds: Thresholds | None = None,
    persist: bool = True,
) -> tuple[AnalysisOutcome, ReasoningTrace]:
    """Disclosure -> event -> analysis for one attestation.

    The trace always ends in a Finalize step and, with ``persist``, is
    written to the store whether the run succeeds or aborts.
    """
    run = AuditRun(store, asset, report_date, backend=backend, thresholds=thresholds)
    asset, report_date, t = run.asset, run.report_date, run.trace

    def save(outcome: AnalysisOutcome | None) -> None:
        if not persist or store.readonly:
            return
        store.put(_outcome_key(asset, report_date, run.backend.name, run.thresholds, "trace"), t.to_dict())
        if outcome is not None:
            store.put(_outcome_key(asset, report_date, run.backend.name, run.thresholds, "outcome"), outcome.to_dict())

    def abort(stage: str, reason: str) -> PipelineAborted:
        if not t.finalized:
            t.finalize(f"aborted at {stage} stage: {reason}")
        save(None)
        return PipelineAborted(stage, reason, trace=t)

    try:
        record = load_attestation(store, asset, report_date)
    except NotFoundError:
        t.thought(f"Locate the {asset} attestation dated {report_date.isoformat()}.")
        t.code(f"store.get(attestation/{asset}/{report_date.isoformat()})")
        t.observation("no attestation record stored for this date")
        raise abort("disclosure", "attestation not found") from None
    try:
        extract = run.agent_disclosure(DisclosureDocument.from_record(record))
    except ExtractionError as exc:
        raise abort("disclosure", str(exc)) from exc
    if not extract.extractable:
        raise abort("disclosure", f"image-only document {extract.source_id!r} excluded")
    try:
        ctx = run.agent_event(asset, report_date)
    except (ContextError, DomainError) as exc:
        raise abort("event", str(exc)) from exc
    try:
        outcome = run.agent_analysis(extract, ctx)
    except AnalysisError:
        save(None)
        raise
    save(outcome)
    return outcome, t
