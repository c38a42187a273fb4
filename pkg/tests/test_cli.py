from __future__ import annotations

import csv
import io
import json
import os
import shutil
import subprocess
import sys

import pytest

from pegscope.cli import main
from pegscope.report import REPORT_COLUMNS, fixture_path

HEADER = (
    "report_date,price_usd,mcap_usd,volume_daily,turnover_ratio,peg_deviation_pct,volatility_daily,"
    "circulation_rep,asset_value,liability_value,coverage_ratio,implied_mcap,supply_gap_pct,analysis_outcome"
)


@pytest.fixture(scope="module")
def data_dir(tmp_path_factory):
    d = tmp_path_factory.mktemp("cli") / "store"
    assert main(["ingest", "--data-dir", str(d), "--fixtures"]) == 0
    return d


def _run(capsys, *argv) -> tuple[int, str, str]:
    code = main(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


def test_ingest_counts_and_idempotence(tmp_path, capsys):
    d = str(tmp_path / "s")
    code, out, _ = _run(capsys, "ingest", "--data-dir", d, "--fixtures")
    assert code == 0
    assert "attestation: 31 extractable + 1 image-only" in out
    code, again, _ = _run(capsys, "ingest", "--data-dir", d, "--fixtures")
    assert code == 0 and again == out


def test_ingest_path_and_parse_errors(tmp_path, capsys):
    code, _, err = _run(capsys, "ingest", "--data-dir", str(tmp_path / "s"), "--market-csv", str(tmp_path / "absent.csv"))
    assert code == 2 and "absent.csv" in err
    bad = tmp_path / "bad.csv"
    bad.write_text("date,asset,price_usd,mcap_usd,volume_daily,volatility_daily\n2022-05-18,USDT,1,1e9,-1,0\n")
    code, _, err = _run(capsys, "ingest", "--data-dir", str(tmp_path / "s2"), "--market-csv", str(bad))
    assert code == 2 and "bad.csv:2" in err
    assert not (tmp_path / "s2" / "market.log").exists()


def test_usage_errors_exit_1(capsys):
    assert _run(capsys, "analyze", "--format", "xml")[0] == 1
    assert _run(capsys, "frobnicate")[0] == 1
    assert _run(capsys, "event-study", "--asset", "DAI", "--center", "2022-05-12")[0] == 1
    assert _run(capsys, "ingest", "--data-dir", "x")[0] == 1


def test_analyze_csv_per_asset(data_dir, capsys):
    code, out, err = _run(capsys, "analyze", "--data-dir", str(data_dir), "--asset", "USDT", "--format", "csv")
    assert code == 0
    lines = out.splitlines()
    assert lines[0] == HEADER == ",".join(REPORT_COLUMNS)
    labels = [row["analysis_outcome"] for row in csv.DictReader(io.StringIO(out))]
    assert labels == ["abnormal", "suspicious"] + ["normal"] * 6
    dates = [row["report_date"] for row in csv.DictReader(io.StringIO(out))]
    assert dates == sorted(dates)
    code, out, err = _run(capsys, "analyze", "--data-dir", str(data_dir), "--asset", "USDC", "--format", "csv")
    rows = list(csv.DictReader(io.StringIO(out)))
    assert len(rows) == 23 and sum(r["analysis_outcome"] == "suspicious" for r in rows) == 4
    assert "2022-06-22" in err


def test_analyze_csv_all_assets_is_split_by_asset(data_dir, capsys):
    code, out, _ = _run(capsys, "analyze", "--data-dir", str(data_dir), "--format", "csv")
    blocks = out.split("\n\n")
    assert [b.splitlines()[0] for b in blocks] == ["# asset: USDC", "# asset: USDT"]
    assert all(b.splitlines()[1] == HEADER for b in blocks)


def test_analyze_text_uses_four_significant_digits(data_dir, capsys):
    code, out, _ = _run(capsys, "analyze", "--data-dir", str(data_dir), "--asset", "USDT")
    assert code == 0
    assert "9.996E-01" in out and "8.227E+10" in out and "7.875E-01" in out


def test_analyze_empty_store(tmp_path, capsys):
    code, out, _ = _run(capsys, "analyze", "--data-dir", str(tmp_path / "empty"), "--format", "csv")
    assert code == 0 and out == HEADER + "\n"


def test_analyze_outputs_are_byte_stable(tmp_path, capsys):
    outs = []
    for n in ("a", "b"):
        d = tmp_path / n
        main(["ingest", "--data-dir", str(d / "store"), "--fixtures"])
        assert main(["analyze", "--data-dir", str(d / "store"), "--out-dir", str(d / "out")]) == 0
        outs.append(d / "out")
    capsys.readouterr()
    for name in ("analysis_usdt.csv", "analysis_usdc.csv", "analysis.txt", "skipped.json"):
        assert (outs[0] / name).read_bytes() == (outs[1] / name).read_bytes()
    assert (outs[0] / "analyze.meta.json").exists()
    skipped = json.loads((outs[0] / "skipped.json").read_text())
    assert [(s["asset"], s["report_date"], s["stage"]) for s in skipped] == [("USDC", "2022-06-22", "disclosure")]
    assert "skipped:" in (outs[0] / "analysis.txt").read_text()


def test_export_figures(data_dir, tmp_path, capsys):
    out = tmp_path / "fig"
    assert main(["export-figures", "--data-dir", str(data_dir), "--out-dir", str(out)]) == 0
    cov = [r for r in csv.DictReader((out / "fig3_coverage.csv").open()) if r["asset"] == "USDT"]
    assert cov[-1]["report_date"] == "2024-01-31"
    assert round(float(cov[-1]["coverage_ratio"]), 3) == 1.059
    capsys.readouterr()
    table = {}
    for asset in ("USDT", "USDC"):
        main(["analyze", "--data-dir", str(data_dir), "--asset", asset, "--format", "csv"])
        table.update({r["report_date"]: r for r in csv.DictReader(io.StringIO(capsys.readouterr().out))})
    for r in csv.DictReader((out / "fig4_liquidity_peg.csv").open()):
        assert r["turnover_ratio"] == table[r["report_date"]]["turnover_ratio"]
        assert r["peg_deviation_pct"] == table[r["report_date"]]["peg_deviation_pct"]
    for r in csv.DictReader((out / "fig2_scale_liquidity.csv").open()):
        assert r["mcap_usd"] == table[r["report_date"]]["mcap_usd"]


def test_export_figures_empty_store(tmp_path, capsys):
    out = tmp_path / "fig"
    assert main(["export-figures", "--data-dir", str(tmp_path / "none"), "--out-dir", str(out)]) == 0
    assert (out / "fig3_coverage.csv").read_text() == "asset,report_date,coverage_ratio\n"


@pytest.mark.skipif(os.geteuid() == 0, reason="root ignores directory permissions")
def test_export_figures_unwritable(data_dir, tmp_path, capsys):
    ro = tmp_path / "ro"
    ro.mkdir()
    ro.chmod(0o500)
    assert main(["export-figures", "--data-dir", str(data_dir), "--out-dir", str(ro / "x")]) == 2


def test_export_figures_target_is_a_file(data_dir, tmp_path, capsys):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    assert main(["export-figures", "--data-dir", str(data_dir), "--out-dir", str(blocker)]) == 2


def test_event_study_commands(data_dir, capsys):
    code, out, _ = _run(capsys, "event-study", "--data-dir", str(data_dir), "--asset", "USDT", "--center", "2022-05-12", "--format", "json")
    assert code == 0
    rep = json.loads(out)
    assert rep["core_window"]["mcap_change"] == pytest.approx(-3.8e9, rel=0.1)
    assert any("assurance" in n["headline"].lower() for n in rep["news"])
    code, out, _ = _run(capsys, "event-study", "--data-dir", str(data_dir), "--asset", "USDT", "--center", "2022-05-18", "--span", "0", "--format", "json")
    rep = json.loads(out)
    assert rep["window"]["days_present"] == 1 and len(rep["days"]) == 1
    code, _, err = _run(capsys, "event-study", "--data-dir", str(data_dir), "--asset", "USDT", "--center", "2019-01-01")
    assert code == 2 and "center" in err
    assert _run(capsys, "event-study", "--data-dir", str(data_dir), "--asset", "USDT", "--center", "2022-05-12", "--span", "-1")[0] == 1


def test_config_flag_changes_labels(data_dir, tmp_path, capsys):
    cfg = tmp_path / "th.json"
    cfg.write_text(json.dumps({"turnover_abnormal": 0.9}))
    code, out, _ = _run(capsys, "analyze", "--data-dir", str(data_dir), "--asset", "USDT", "--format", "csv", "--config", str(cfg))
    assert code == 0
    assert next(csv.DictReader(io.StringIO(out)))["analysis_outcome"] == "normal"
    cfg.write_text("[1]")
    assert _run(capsys, "analyze", "--data-dir", str(data_dir), "--config", str(cfg))[0] == 2


def test_console_script_and_module_entry(tmp_path):
    exe = shutil.which("pegscope")
    cmds = [[sys.executable, "-m", "pegscope"]] + ([[exe]] if exe else [])
    for cmd in cmds:
        proc = subprocess.run(cmd + ["--version"], capture_output=True, text=True, timeout=60)
        assert proc.returncode == 0 and proc.stdout.startswith("pegscope ")
    assert fixture_path("thresholds.json").is_file()
