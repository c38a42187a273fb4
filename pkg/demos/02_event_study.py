"""Look at the two market episodes covered by the fixtures.

May 2022: USDT capitalisation falls while USDC grows over the core window.
March 2023: USDC trades well below its peg and USDT trades above it.
"""
from __future__ import annotations

import tempfile

from pegscope.report import event_study, ingest_fixtures
from pegscope.store import Store


def main() -> None:
    with tempfile.TemporaryDirectory() as tmp:
        store = Store(tmp)
        ingest_fixtures(store)
        for center in ("2022-05-12", "2023-03-11"):
            for asset in ("USDT", "USDC"):
                print(event_study(store, asset, center, 3).render_text())


if __name__ == "__main__":
    main()
