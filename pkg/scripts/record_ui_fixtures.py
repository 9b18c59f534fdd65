#!/usr/bin/env python3
"""Record live service responses into the frontend's test fixtures.

The browser terminal is snapshot-tested against these exact payloads: every
number it renders must appear verbatim in one of them. Re-run after any
change to the service's response shapes.
"""

import json
import tempfile
from pathlib import Path

from fastapi.testclient import TestClient

import bnmarket as bm

FIXTURES = Path(__file__).resolve().parent.parent / "frontend" / "tests" / "fixtures"


def main():
    FIXTURES.mkdir(parents=True, exist_ok=True)
    store = bm.MarketStore(tempfile.mkdtemp())
    client = TestClient(bm.create_app(store))

    def save(name, response):
        payload = {"status": response.status_code, "body": response.json()}
        (FIXTURES / f"{name}.json").write_text(json.dumps(payload, indent=1))
        print(f"{name}: {response.status_code}")

    client.post("/markets", json={"preset": "tournament:m=3", "b": 2.0, "id": "cup"})
    save("market", client.get("/markets/cup"))
    save("marginals_initial", client.get("/markets/cup/marginals"))
    save(
        "quote_buy_x1t1",
        client.get("/markets/cup/quote", params={"security": "X1=T1", "shares": 2.0}),
    )
    save(
        "receipt_buy_x1t1",
        client.post(
            "/markets/cup/trades",
            json={"security": "X1=T1", "shares": 2.0, "quote_revision": 0},
        ),
    )
    save("market_after_buy", client.get("/markets/cup"))
    save("marginals_after_buy", client.get("/markets/cup/marginals"))
    save(
        "quote_sell_x1t1",
        client.get("/markets/cup/quote", params={"security": "X1=T1", "shares": -2.0}),
    )
    save(
        "receipt_sell_x1t1",
        client.post(
            "/markets/cup/trades",
            json={"security": "X1=T1", "shares": -2.0, "quote_revision": 1},
        ),
    )
    save("market_after_sell", client.get("/markets/cup"))
    save("marginals_after_sell", client.get("/markets/cup/marginals"))
    save(
        "quote_parlay",
        client.get(
            "/markets/cup/quote",
            params={"security": "X2=T1 & X5=T3", "shares": 1.0},
        ),
    )
    save(
        "quote_approx",
        client.get(
            "/markets/cup/quote",
            params={"security": "X4=T1 & X5=T3", "shares": 1.0},
        ),
    )
    save(
        "error_stale",
        client.post(
            "/markets/cup/trades",
            json={"security": "X1=T1", "shares": 1.0, "quote_revision": 0},
        ),
    )
    save(
        "error_parse",
        client.get(
            "/markets/cup/quote", params={"security": "X1==T1", "shares": 1.0}
        ),
    )


if __name__ == "__main__":
    main()
