"""Drive the data tools directly, then follow one pipeline run step by step.

The first half talks JSON-RPC to an in-process server exactly as a client
on stdio would. The second half runs the three-agent pipeline for the one
abnormal USDT attestation and prints its reasoning trace.
"""
from __future__ import annotations

import json
import tempfile

from pegscope.agents import run_pipeline
from pegscope.mcp import ToolServer
from pegscope.report import ingest_fixtures
from pegscope.store import Store


def rpc(server: ToolServer, id_: int, method: str, params: dict | None = None) -> dict:
    msg = {"jsonrpc": "2.0", "id": id_, "method": method}
    if params is not None:
        msg["params"] = params
    line = json.dumps(msg)
    print(">>", line)
    reply = server.handle_line(line)
    print("<<", reply[:200] + ("..." if len(reply) > 200 else ""))
    return json.loads(reply)


def main() -> None:
    with tempfile.TemporaryDirectory() as tmp:
        store = Store(tmp)
        ingest_fixtures(store)
        server = ToolServer(store)
        rpc(server, 1, "tools/list")
        rpc(server, 2, "tools/call", {"name": "market.usdc_snapshot", "arguments": {"date": "2023-03-11"}})
        rpc(server, 3, "tools/call", {"name": "news.usdc_range", "arguments": {"start": "2023-03-10", "end": "2023-03-12"}})
        rpc(server, 4, "tools/call", {"name": "market.usdt_snapshot", "arguments": {"date": "1999-01-01"}})
        print()

        outcome, trace = run_pipeline(store, "USDT", "2022-05-18")
        print(f"label: {outcome.label}")
        for i, step in enumerate(trace.steps, 1):
            refs = f" refs={list(step.refs)}" if step.refs else ""
            print(f"[{i:02d}] {step.stage.value}:{refs} {step.content}")


if __name__ == "__main__":
    main()
