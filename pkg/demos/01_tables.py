"""Rebuild the two per-asset overview tables from the shipped fixtures.

Run with ``python3 demos/01_tables.py``. Everything happens in a temporary
store, so the working directory is left untouched.
"""
from __future__ import annotations

import tempfile

from pegscope.report import analyze_store, ingest_fixtures, render_text
from pegscope.store import Store


def main() -> None:
    with tempfile.TemporaryDirectory() as tmp:
        store = Store(tmp)
        for line in ingest_fixtures(store).lines():
            print(line)
        print()
        report = analyze_store(store)
        print(render_text(report))
        for asset in report.assets:
            labels = [r.analysis_outcome for r in report.for_asset(asset).rows]
            counts = {k: labels.count(k) for k in ("normal", "suspicious", "abnormal")}
            print(f"{asset}: {counts}")


if __name__ == "__main__":
    main()
