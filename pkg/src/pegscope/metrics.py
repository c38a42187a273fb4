"""Domain values and the derived alignment indicators.

Everything here is a pure function over immutable values. Monetary
quantities are IEEE doubles: the data span at most 12 integer digits, well
inside the 15-17 significant digits a double carries, and the canonical JSON
layer renders them with the shortest round-trip representation.
"""
from __future__ import annotations

import datetime as dt
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

from pegscope.errors import DomainError

# lowercase symbol -> remote market-data id
ASSET_REGISTRY: dict[str, str] = {
    "usdt": "tether",
    "usdc": "usd-coin",
}


def register_asset(symbol: str, remote_id: str) -> None:
    """Make a new stablecoin symbol constructible as an :class:`AssetId`."""
    if not symbol.strip():
        raise DomainError("asset symbol must be non-empty")
    ASSET_REGISTRY[symbol.strip().lower()] = remote_id


@dataclass(frozen=True, order=True)
class AssetId:
    symbol: str

    def __post_init__(self) -> None:
        sym = str(self.symbol).strip()
        if not sym:
            raise DomainError("asset symbol must be non-empty")
        if sym.lower() not in ASSET_REGISTRY:
            raise DomainError(f"unknown asset {sym!r}; known: {sorted(s.upper() for s in ASSET_REGISTRY)}")
        object.__setattr__(self, "symbol", sym.upper())

    @property
    def remote_id(self) -> str:
        return ASSET_REGISTRY[self.symbol.lower()]

    def __str__(self) -> str:
        return self.symbol


def as_asset(value: AssetId | str) -> AssetId:
    return value if isinstance(value, AssetId) else AssetId(value)


def parse_date(value: dt.date | str) -> dt.date:
    """Accept a date, an ISO ``YYYY-MM-DD`` string or a ``DD/MM/YYYY`` string."""
    if isinstance(value, dt.datetime):
        return value.date()
    if isinstance(value, dt.date):
        return value
    text = str(value).strip()
    try:
        if "/" in text:
            return dt.datetime.strptime(text, "%d/%m/%Y").date()
        return dt.date.fromisoformat(text)
    except ValueError as exc:
        raise DomainError(f"invalid date {value!r}") from exc


def _where(asset, date) -> str:
    if asset is None and date is None:
        return ""
    return f" for ({asset}, {date})"


@dataclass(frozen=True)
class MarketSnapshot:
    """One UTC day of observed market state for one asset."""

    asset: AssetId
    date: dt.date
    price_usd: float
    mcap_usd: float
    volume_daily: float
    volatility_daily: float

    def __post_init__(self) -> None:
        object.__setattr__(self, "asset", as_asset(self.asset))
        object.__setattr__(self, "date", parse_date(self.date))
        for name in ("price_usd", "mcap_usd", "volume_daily", "volatility_daily"):
            object.__setattr__(self, name, float(getattr(self, name)))
        if not self.price_usd > 0:
            raise DomainError(f"price_usd must be > 0, got {self.price_usd}{_where(self.asset, self.date)}")
        for name in ("mcap_usd", "volume_daily", "volatility_daily"):
            if not getattr(self, name) >= 0:
                raise DomainError(f"{name} must be >= 0, got {getattr(self, name)}{_where(self.asset, self.date)}")

    def to_dict(self) -> dict:
        return {
            "asset": self.asset.symbol,
            "date": self.date.isoformat(),
            "price_usd": self.price_usd,
            "mcap_usd": self.mcap_usd,
            "volume_daily": self.volume_daily,
            "volatility_daily": self.volatility_daily,
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "MarketSnapshot":
        return cls(
            asset=d["asset"],
            date=d["date"],
            price_usd=d["price_usd"],
            mcap_usd=d["mcap_usd"],
            volume_daily=d["volume_daily"],
            volatility_daily=d["volatility_daily"],
        )

    def derived(self) -> "MarketDerived":
        return MarketDerived(
            turnover_ratio=compute_turnover(self.volume_daily, self.mcap_usd, asset=self.asset, date=self.date),
            peg_deviation_pct=compute_peg_deviation(self.price_usd),
        )


@dataclass(frozen=True)
class MarketDerived:
    turnover_ratio: float
    peg_deviation_pct: float

    def to_dict(self) -> dict:
        return {"turnover_ratio": self.turnover_ratio, "peg_deviation_pct": self.peg_deviation_pct}


@dataclass(frozen=True)
class DisclosureExtract:
    """Reserve and liability figures taken from one attestation.

    Non-extractable documents (image-only files) carry ``None`` numerics and
    never reach classification.
    """

    asset: AssetId
    report_date: dt.date
    circulation_rep: float | None
    asset_value: float | None
    liability_value: float | None
    auditor: str | None = None
    extractable: bool = True
    source_id: str = ""

    def __post_init__(self) -> None:
        object.__setattr__(self, "asset", as_asset(self.asset))
        object.__setattr__(self, "report_date", parse_date(self.report_date))
        numerics = ("circulation_rep", "asset_value", "liability_value")
        if not self.extractable:
            if any(getattr(self, n) is not None for n in numerics):
                raise DomainError(f"non-extractable record {self.source_id!r} must not carry numeric fields")
            return
        for n in numerics:
            v = getattr(self, n)
            if v is None:
                raise DomainError(f"extractable record {self.source_id!r} lacks {n}")
            object.__setattr__(self, n, float(v))
        if not self.circulation_rep > 0:
            raise DomainError(f"circulation_rep must be > 0 in {self.source_id!r}")
        if not self.asset_value >= 0:
            raise DomainError(f"asset_value must be >= 0 in {self.source_id!r}")
        if not self.liability_value > 0:
            raise DomainError(f"liability_value must be > 0 in {self.source_id!r}")
        # 1% slack absorbs rounding in published figures
        if self.circulation_rep > self.liability_value * 1.01:
            raise DomainError(
                f"circulation_rep {self.circulation_rep} exceeds liability_value {self.liability_value} in {self.source_id!r}"
            )

    def to_dict(self) -> dict:
        return {
            "asset": self.asset.symbol,
            "report_date": self.report_date.isoformat(),
            "circulation_rep": self.circulation_rep,
            "asset_value": self.asset_value,
            "liability_value": self.liability_value,
            "auditor": self.auditor,
            "extractable": self.extractable,
            "source_id": self.source_id,
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "DisclosureExtract":
        return cls(
            asset=d["asset"],
            report_date=d["report_date"],
            circulation_rep=d.get("circulation_rep"),
            asset_value=d.get("asset_value"),
            liability_value=d.get("liability_value"),
            auditor=d.get("auditor"),
            extractable=bool(d.get("extractable", True)),
            source_id=d.get("source_id", ""),
        )


@dataclass(frozen=True)
class AlignmentMetrics:
    coverage_ratio: float
    implied_mcap: float
    circulation_obs: float
    supply_gap_pct: float

    def to_dict(self) -> dict:
        return {
            "coverage_ratio": self.coverage_ratio,
            "implied_mcap": self.implied_mcap,
            "circulation_obs": self.circulation_obs,
            "supply_gap_pct": self.supply_gap_pct,
        }


@dataclass(frozen=True)
class WindowAggregate:
    asset: AssetId
    center_date: dt.date
    span_days: int
    mean_price: float
    max_abs_peg_dev_pct: float
    mean_turnover: float
    mcap_change: float
    days_present: int

    def to_dict(self) -> dict:
        return {
            "asset": self.asset.symbol,
            "center_date": self.center_date.isoformat(),
            "span_days": self.span_days,
            "mean_price": self.mean_price,
            "max_abs_peg_dev_pct": self.max_abs_peg_dev_pct,
            "mean_turnover": self.mean_turnover,
            "mcap_change": self.mcap_change,
            "days_present": self.days_present,
        }


def compute_turnover(volume_daily: float, mcap_usd: float, *, asset=None, date=None) -> float:
    """Daily volume over market capitalisation."""
    if not mcap_usd > 0:
        raise DomainError(f"turnover undefined: mcap_usd must be > 0, got {mcap_usd}{_where(asset, date)}")
    if volume_daily < 0:
        raise DomainError(f"volume_daily must be >= 0, got {volume_daily}{_where(asset, date)}")
    return volume_daily / mcap_usd


def compute_peg_deviation(price_usd: float) -> float:
    """Signed distance from the one-dollar peg, in percent."""
    if not price_usd > 0:
        raise DomainError(f"price_usd must be > 0, got {price_usd}")
    return 100.0 * (price_usd - 1.0)


def compute_coverage(asset_value: float, liability_value: float) -> float:
    if not liability_value > 0:
        raise DomainError(f"coverage undefined: liability_value must be > 0, got {liability_value}")
    return asset_value / liability_value


def compute_implied_mcap(circulation_rep: float, price_usd: float) -> float:
    if not circulation_rep > 0:
        raise DomainError(f"circulation_rep must be > 0, got {circulation_rep}")
    if not price_usd > 0:
        raise DomainError(f"price_usd must be > 0, got {price_usd}")
    return circulation_rep * price_usd


def compute_supply_gap(mcap_usd: float, price_usd: float, circulation_rep: float) -> float:
    """Percent by which market-observed circulation exceeds reported circulation.

    Evaluated as ``(mcap - implied) / implied``, which equals
    ``(mcap/price - reported) / reported`` algebraically and returns an exact
    zero when ``mcap`` was itself computed as ``reported * price``.
    """
    implied = compute_implied_mcap(circulation_rep, price_usd)
    return 100.0 * (mcap_usd - implied) / implied


def compute_alignment(snapshot: MarketSnapshot, extract: DisclosureExtract) -> AlignmentMetrics:
    if not extract.extractable:
        raise DomainError(f"alignment needs an extractable disclosure, got {extract.source_id!r}")
    return AlignmentMetrics(
        coverage_ratio=compute_coverage(extract.asset_value, extract.liability_value),
        implied_mcap=compute_implied_mcap(extract.circulation_rep, snapshot.price_usd),
        circulation_obs=snapshot.mcap_usd / snapshot.price_usd,
        supply_gap_pct=compute_supply_gap(snapshot.mcap_usd, snapshot.price_usd, extract.circulation_rep),
    )


def estimate_volatility(intraday_prices: Sequence[float]) -> float:
    """High-low range over the low, in percent. A single price gives 0."""
    prices = [float(p) for p in intraday_prices]
    if not prices:
        raise DomainError("volatility needs at least one price")
    if any(not p > 0 for p in prices):
        raise DomainError("intraday prices must all be > 0")
    lo, hi = min(prices), max(prices)
    return 100.0 * (hi - lo) / lo


def aggregate_window(snapshots: Iterable[MarketSnapshot], center_date: dt.date | str, span_days: int) -> WindowAggregate:
    """Fold the snapshots falling within ``center_date +/- span_days``.

    Missing days are skipped, never interpolated.
    """
    center = parse_date(center_date)
    if span_days < 0:
        raise DomainError(f"span_days must be >= 0, got {span_days}")
    snaps = list(snapshots)
    assets = {s.asset for s in snaps}
    if len(assets) > 1:
        raise DomainError(f"window snapshots mix assets: {sorted(a.symbol for a in assets)}")
    lo = center - dt.timedelta(days=span_days)
    hi = center + dt.timedelta(days=span_days)
    inside = sorted((s for s in snaps if lo <= s.date <= hi), key=lambda s: s.date)
    if not inside:
        raise DomainError(f"no snapshot in window {lo.isoformat()}..{hi.isoformat()}")
    if len({s.date for s in inside}) != len(inside):
        raise DomainError("window contains more than one snapshot per date")
    n = len(inside)
    derived = [s.derived() for s in inside]
    return WindowAggregate(
        asset=inside[0].asset,
        center_date=center,
        span_days=span_days,
        mean_price=sum(s.price_usd for s in inside) / n,
        max_abs_peg_dev_pct=max(abs(d.peg_deviation_pct) for d in derived),
        mean_turnover=sum(d.turnover_ratio for d in derived) / n,
        mcap_change=inside[-1].mcap_usd - inside[0].mcap_usd,
        days_present=n,
    )
