"""Market lifecycle, persistence, and the HTTP facade.

One logical writer per market (a lock around trade application); reads serve
the latest published immutable state without locking. Persistence is a JSON
market description, an append-only JSON-lines trade log, and optional CPT
snapshots; replaying the log from the initial state reproduces the live
state bit for bit, which doubles as the recovery procedure and the test
oracle.
"""

from __future__ import annotations

import json
import threading
import time
import uuid
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Mapping

from .bayesnet import bayesnet_from_json, bayesnet_to_json, conditional_query
from .errors import (
    BadSpecError,
    CompatCheckTooLargeError,
    MarketError,
    StaleQuoteError,
)
from .lmsr import AUTO, MarketState, Quote, quote as make_quote, shares_for_budget
from .securities import CnfSecurity, is_compatible, parse_security
from .tournament import from_preset
from .updater import TradeReceipt, apply_trade

MARKET_FILE = "market.json"
LOG_FILE = "trades.jsonl"
SNAPSHOT_FILE = "snapshot.json"


def sig12(x: float) -> float:
    """Render-stable probability/cost form: 12 significant digits."""
    return float(f"{x:.12g}")


@dataclass
class TradeLogEntry:
    seq: int
    timestamp: float
    security: str
    delta: float
    mode: str
    dollar_cost: float
    pre_price: float
    post_price: float

    def to_json(self) -> dict:
        return {
            "seq": self.seq,
            "timestamp": self.timestamp,
            "security": self.security,
            "delta": self.delta,
            "mode": self.mode,
            "dollar_cost": self.dollar_cost,
            "pre_price": self.pre_price,
            "post_price": self.post_price,
        }

    @staticmethod
    def from_json(doc: Mapping) -> "TradeLogEntry":
        return TradeLogEntry(
            seq=int(doc["seq"]),
            timestamp=float(doc["timestamp"]),
            security=doc["security"],
            delta=float(doc["delta"]),
            mode=doc["mode"],
            dollar_cost=float(doc["dollar_cost"]),
            pre_price=float(doc["pre_price"]),
            post_price=float(doc["post_price"]),
        )


class _Market:
    def __init__(self, market_id: str, doc: dict, state: MarketState, directory: Path):
        self.id = market_id
        self.doc = doc
        self.state = state
        self.directory = directory
        self.lock = threading.Lock()
        # Compatibility is a property of the (immutable) structure and the
        # security text, so verdicts are cached for the market's lifetime.
        self.compat_reports: dict[str, Any] = {}
        self.securities: dict[str, CnfSecurity] = {}

    @property
    def allow_nondecomposable(self) -> bool:
        return bool(self.doc.get("allow_nondecomposable", False))

    def parse(self, text: str) -> CnfSecurity:
        cached = self.securities.get(text)
        if cached is None:
            cached = parse_security(text, self.state.distribution.variables)
            self.securities[text] = cached
        return cached


class MarketStore:
    """Directory-backed market registry: one subdirectory per market."""

    def __init__(self, root: str | Path):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)
        self._markets: dict[str, _Market] = {}
        self._registry_lock = threading.Lock()

    # -- creation and loading ------------------------------------------------

    def create_market(self, body: Mapping[str, Any]) -> _Market:
        if not isinstance(body, Mapping):
            raise BadSpecError("market description must be a JSON object")
        market_id = body.get("id") or uuid.uuid4().hex[:12]
        if not isinstance(market_id, str) or "/" in market_id or not market_id:
            raise BadSpecError(f"bad market id {market_id!r}")
        b = float(body.get("b", 1.0))
        if b <= 0:
            raise BadSpecError("liquidity 'b' must be positive")

        if "preset" in body:
            _, _, bn = from_preset(body["preset"], body.get("teams"))
            network_doc = bayesnet_to_json(bn)
        else:
            network_doc = {
                "variables": body.get("variables"),
                "edges": body.get("edges", []),
                "cpts": body.get("cpts", {}),
            }
            bn = bayesnet_from_json(network_doc)
            network_doc = bayesnet_to_json(bn)

        allow_nd = bool(body.get("allow_nondecomposable", False))
        if not bn.dag.is_decomposable() and not allow_nd:
            raise BadSpecError(
                "graph is not decomposable; pass allow_nondecomposable to create "
                "an approx-only market"
            )

        with self._registry_lock:
            directory = self.root / market_id
            if market_id in self._markets or directory.exists():
                raise BadSpecError(f"market {market_id!r} already exists")
            directory.mkdir(parents=True)
            doc = {
                "id": market_id,
                "b": b,
                "created_at": time.time(),
                "allow_nondecomposable": allow_nd,
                "network": network_doc,
            }
            if "preset" in body:
                doc["preset"] = body["preset"]
            (directory / MARKET_FILE).write_text(json.dumps(doc, indent=1))
            market = _Market(market_id, doc, MarketState.fresh(b, bn), directory)
            self._markets[market_id] = market
            return market

    def open_market(self, market_id: str, verify_log: bool = False) -> _Market:
        """Load a market from disk: initial network, newest snapshot, then
        replay the log tail. With ``verify_log`` every replayed step must
        reproduce its logged post price."""
        directory = self.root / market_id
        market_file = directory / MARKET_FILE
        if not market_file.exists():
            raise KeyError(market_id)
        doc = json.loads(market_file.read_text())
        bn = bayesnet_from_json(doc["network"])
        state = MarketState.fresh(float(doc["b"]), bn)

        snapshot_file = directory / SNAPSHOT_FILE
        if snapshot_file.exists():
            snap = json.loads(snapshot_file.read_text())
            state = MarketState(
                b=float(doc["b"]),
                distribution=bayesnet_from_json(snap["network"]),
                revision=int(snap["revision"]),
                created_at=float(doc["created_at"]),
                updated_at=float(snap.get("taken_at", doc["created_at"])),
            )

        market = _Market(market_id, doc, state, directory)
        for entry in self._read_log(directory):
            if entry.seq <= market.state.revision:
                continue
            f = market.parse(entry.security)
            new_state, receipt = apply_trade(
                market.state,
                f,
                entry.delta,
                entry.mode,
                self._compat_verdict(market, entry.security),
            )
            if verify_log and abs(receipt.post_price - entry.post_price) > 1e-9:
                raise MarketError(
                    f"replay of trade {entry.seq} diverged: "
                    f"{receipt.post_price!r} vs logged {entry.post_price!r}"
                )
            market.state = new_state
        return market

    def get(self, market_id: str) -> _Market:
        market = self._markets.get(market_id)
        if market is None:
            with self._registry_lock:
                market = self._markets.get(market_id)
                if market is None:
                    market = self.open_market(market_id)
                    self._markets[market_id] = market
        return market

    def ids(self) -> list[str]:
        on_disk = {p.name for p in self.root.iterdir() if (p / MARKET_FILE).exists()}
        return sorted(on_disk | set(self._markets))

    @staticmethod
    def _read_log(directory: Path) -> list[TradeLogEntry]:
        log_file = directory / LOG_FILE
        if not log_file.exists():
            return []
        entries = []
        for line in log_file.read_text().splitlines():
            if line.strip():
                entries.append(TradeLogEntry.from_json(json.loads(line)))
        return entries

    # -- operations ------------------------------------------------------------

    @staticmethod
    def _delta_for(
        state: MarketState, f: CnfSecurity, shares: float | None, budget: float | None
    ) -> float:
        if (shares is None) == (budget is None):
            raise BadSpecError("pass exactly one of 'shares' or 'budget'")
        if shares is not None:
            return float(shares) / state.b
        return shares_for_budget(state, f, float(budget))

    def _compat_verdict(self, market: _Market, security: str) -> bool | None:
        """Cached structure-preservation verdict; None means 'let the engine
        decide' (non-decomposable graphs and oversized checks)."""
        if not market.state.distribution.dag.is_decomposable():
            return None
        report = market.compat_reports.get(security)
        if report is None:
            try:
                report = is_compatible(
                    market.parse(security), market.state.distribution.dag
                )
            except CompatCheckTooLargeError:
                return None
            market.compat_reports[security] = report
        return report.compatible

    def get_quote(
        self,
        market_id: str,
        security: str,
        shares: float | None = None,
        budget: float | None = None,
    ) -> tuple[Quote, int]:
        market = self.get(market_id)
        state = market.state  # one published snapshot for the whole quote
        f = market.parse(security)
        delta = self._delta_for(state, f, shares, budget)
        return make_quote(state, f, delta, self._compat_verdict(market, security)), state.revision

    def post_trade(
        self,
        market_id: str,
        security: str,
        shares: float | None = None,
        budget: float | None = None,
        mode: str = AUTO,
        quote_revision: int | None = None,
    ) -> TradeReceipt:
        market = self.get(market_id)
        f = market.parse(security)
        with market.lock:
            if quote_revision is not None and quote_revision != market.state.revision:
                fresh, _rev = self.get_quote(market_id, security, shares, budget)
                raise StaleQuoteError(
                    f"quote was for revision {quote_revision}, market is at "
                    f"{market.state.revision}; re-quoted cost {sig12(fresh.dollar_cost)}"
                )
            delta = self._delta_for(market.state, f, shares, budget)
            new_state, receipt = apply_trade(
                market.state, f, delta, mode, self._compat_verdict(market, security)
            )
            if receipt.delta != 0.0:
                entry = TradeLogEntry(
                    seq=new_state.revision,
                    timestamp=time.time(),
                    security=security,
                    delta=receipt.delta,
                    mode=receipt.mode,
                    dollar_cost=receipt.dollar_cost,
                    pre_price=receipt.pre_price,
                    post_price=receipt.post_price,
                )
                with open(market.directory / LOG_FILE, "a") as fh:
                    fh.write(json.dumps(entry.to_json()) + "\n")
                    fh.flush()
                market.state = new_state
            return receipt

    def get_marginals(
        self, market_id: str, names: list[str] | None = None
    ) -> dict[str, dict[str, float]]:
        market = self.get(market_id)
        bn = market.state.distribution
        if names is None:
            names = [v.name for v in bn.variables]
        out = {}
        for name in names:
            out[name] = conditional_query(bn, name, {})
        return out

    def check_compat(self, market_id: str, security: str):
        market = self.get(market_id)
        report = market.compat_reports.get(security)
        if report is None:
            f = market.parse(security)
            report = is_compatible(f, market.state.distribution.dag)
            market.compat_reports[security] = report
        return report

    def log_entries(self, market_id: str, from_seq: int = 0) -> list[TradeLogEntry]:
        market = self.get(market_id)
        return [e for e in self._read_log(market.directory) if e.seq >= from_seq]

    def snapshot(self, market_id: str) -> dict:
        market = self.get(market_id)
        with market.lock:
            state = market.state
            snap = {
                "revision": state.revision,
                "taken_at": time.time(),
                "network": bayesnet_to_json(state.distribution),
            }
            (market.directory / SNAPSHOT_FILE).write_text(json.dumps(snap))
            return {"revision": state.revision, "path": str(market.directory / SNAPSHOT_FILE)}

    def describe(self, market_id: str) -> dict:
        market = self.get(market_id)
        state = market.state
        bn = state.distribution
        return {
            "id": market.id,
            "b": state.b,
            "revision": state.revision,
            "decomposable": bn.dag.is_decomposable(),
            "allow_nondecomposable": market.allow_nondecomposable,
            "preset": market.doc.get("preset"),
            "variables": [
                {"name": v.name, "domain": list(v.domain)} for v in bn.variables
            ],
            "edges": sorted([a, b] for a, b in bn.dag.edges),
        }


# -- HTTP layer -----------------------------------------------------------------


def quote_payload(q: Quote, revision: int) -> dict:
    return {
        "security": q.security.source_text,
        "current_price": sig12(q.current_price),
        "delta": q.delta,
        "dollar_cost": sig12(q.dollar_cost),
        "post_price": sig12(q.post_price),
        "mode": q.mode,
        "warning": q.warning,
        "revision": revision,
    }


def receipt_payload(r: TradeReceipt) -> dict:
    return {
        "security": r.security_text,
        "delta": r.delta,
        "dollar_cost": sig12(r.dollar_cost),
        "mode": r.mode,
        "pre_price": sig12(r.pre_price),
        "post_price": sig12(r.post_price),
        "revision": r.revision,
        "approx_kl": None if r.approx_kl is None else sig12(r.approx_kl),
        "warning": r.warning,
    }


def marginals_payload(rows: Mapping[str, Mapping[str, float]]) -> dict:
    return {
        name: {label: sig12(p) for label, p in row.items()}
        for name, row in rows.items()
    }


_HTTP_STATUS = {
    "bad_spec": 400,
    "null_event": 400,
    "compat_check_too_large": 400,
    "degenerate_price": 409,
    "not_structure_preserving": 409,
    "stale_quote": 409,
    "engine_error": 400,
}


def create_app(store: MarketStore):
    from fastapi import Body, FastAPI, Query, Request
    from fastapi.middleware.cors import CORSMiddleware
    from fastapi.responses import JSONResponse

    app = FastAPI(title="bnmarket")
    app.state.store = store
    # The browser terminal is served statically from anywhere.
    app.add_middleware(
        CORSMiddleware, allow_origins=["*"], allow_methods=["*"], allow_headers=["*"]
    )

    @app.exception_handler(MarketError)
    async def market_error_handler(request: Request, exc: MarketError):
        return JSONResponse(
            status_code=_HTTP_STATUS.get(exc.code, 400),
            content={"error": exc.code, "detail": str(exc)},
        )

    @app.exception_handler(KeyError)
    async def missing_market_handler(request: Request, exc: KeyError):
        return JSONResponse(
            status_code=404,
            content={"error": "not_found", "detail": f"no market {exc.args[0]!r}"},
        )

    @app.post("/markets")
    def create(body: dict = Body(...)):
        market = store.create_market(body)
        return store.describe(market.id)

    @app.get("/markets")
    def list_markets():
        return {"markets": store.ids()}

    @app.get("/markets/{market_id}")
    def describe(market_id: str):
        return store.describe(market_id)

    @app.get("/markets/{market_id}/quote")
    def get_quote(
        market_id: str,
        security: str = Query(...),
        shares: float | None = Query(None),
        budget: float | None = Query(None),
    ):
        q, revision = store.get_quote(market_id, security, shares, budget)
        return quote_payload(q, revision)

    @app.post("/markets/{market_id}/trades")
    def post_trade(market_id: str, body: dict = Body(...)):
        receipt = store.post_trade(
            market_id,
            security=body.get("security", ""),
            shares=body.get("shares"),
            budget=body.get("budget"),
            mode=body.get("mode", AUTO),
            quote_revision=body.get("quote_revision"),
        )
        return receipt_payload(receipt)

    @app.get("/markets/{market_id}/marginals")
    def get_marginals(market_id: str, vars: str | None = Query(None)):
        names = [v for v in vars.split(",") if v] if vars else None
        return marginals_payload(store.get_marginals(market_id, names))

    @app.get("/markets/{market_id}/log")
    def get_log(market_id: str, from_seq: int = Query(0, alias="from")):
        return {"entries": [e.to_json() for e in store.log_entries(market_id, from_seq)]}

    @app.post("/markets/{market_id}/snapshot")
    def snapshot(market_id: str):
        return store.snapshot(market_id)

    @app.get("/markets/{market_id}/compat")
    def compat(market_id: str, security: str = Query(...)):
        report = store.check_compat(market_id, security)
        payload: dict = {"compatible": report.compatible}
        if report.witness is not None:
            w = report.witness
            payload["witness"] = {
                "variable": w.variable,
                "value_a": w.value_a,
                "value_b": w.value_b,
                "blanket": w.blanket,
                "context_a": w.context_a,
                "context_b": w.context_b,
            }
        return payload

    return app
