from __future__ import annotations

import csv
import json
import re

import pytest

from agent_trust.cli import EXIT_ANALYSIS, EXIT_OK, EXIT_TRIAL_FAILURES, EXIT_USAGE, main
from agent_trust.records import read_records, write_records


def _run(out, wave, *extra, seed=1):
    table = f"src/agent_trust/data/table1_w{wave}.json"
    return main(["run", "--wave", str(wave), "--mode", "scripted", "--archive", table, "--out", str(out), "--seed", str(seed), *extra])


@pytest.fixture(autouse=True)
def _repo_root(monkeypatch, request):
    monkeypatch.chdir(request.config.rootpath)


def test_params_defaults(tmp_path):
    assert main(["params", "--out", str(tmp_path)]) == EXIT_OK
    rows = list(csv.DictReader((tmp_path / "grid.csv").open()))
    assert len(rows) == 110
    assert (rows[0]["endowment_cents"], rows[0]["x_tokens"]) == ("530", "265000")
    assert (rows[-1]["endowment_cents"], rows[-1]["x_tokens"]) == ("1620", "810000")
    assert rows[0]["triple_tokens"] == "795000"


def test_params_single_row(tmp_path):
    assert main(["params", "--q1", "530", "--q3", "530", "--out", str(tmp_path)]) == EXIT_OK
    assert len(list(csv.DictReader((tmp_path / "grid.csv").open()))) == 1


def test_params_bad_span_is_usage_error(tmp_path, capsys):
    assert main(["params", "--q3", "1625", "--out", str(tmp_path)]) == EXIT_USAGE
    assert "not a multiple" in capsys.readouterr().err


def test_params_from_history_files(tmp_path):
    hist = tmp_path / "hist.csv"
    hist.write_text("study_id,year,endowment_usd,multiplier\na,2000,4.00,3\nb,2000,8.00,3\nc,2010,10.00,3\nd,2010,12.00,3\n")
    infl = tmp_path / "infl.csv"
    infl.write_text("from_year,to_year,factor\n2000,2022,1.5\n2010,2022,1\n")
    rc = main(["params", "--history", str(hist), "--inflation", str(infl), "--reference-year", "2022", "--out", str(tmp_path)])
    assert rc == EXIT_OK
    rows = list(csv.DictReader((tmp_path / "grid.csv").open()))
    assert rows[0]["endowment_cents"] == "900" and rows[-1]["endowment_cents"] == "1200"


def test_unknown_flag_is_usage_error(tmp_path):
    with pytest.raises(SystemExit) as err:
        main(["report", "--format", "pdf", "--out", str(tmp_path)])
    assert err.value.code == EXIT_USAGE


def test_config_file_and_flag_precedence(tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"q1": 530, "q3": 600, "out": str(tmp_path / "from_cfg")}))
    assert main(["params", "--config", str(cfg), "--q3", "560"]) == EXIT_OK
    rows = list(csv.DictReader((tmp_path / "from_cfg" / "grid.csv").open()))
    assert [r["endowment_cents"] for r in rows] == ["530", "540", "550", "560"]


def test_config_unknown_key(tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"bogus": 1}))
    assert main(["params", "--config", str(cfg), "--out", str(tmp_path)]) == EXIT_USAGE


def test_run_scripted_deterministic(tmp_path):
    assert _run(tmp_path / "a", 1) == EXIT_OK
    assert _run(tmp_path / "b", 1) == EXIT_OK
    a = (tmp_path / "a" / "records.jsonl").read_bytes()
    assert a == (tmp_path / "b" / "records.jsonl").read_bytes()
    assert (tmp_path / "a" / "ledger.jsonl").read_bytes() == (tmp_path / "b" / "ledger.jsonl").read_bytes()
    assert len(read_records(tmp_path / "a" / "records.jsonl")) == 440


def test_run_replay_checked_in_archive(tmp_path, data_dir):
    from agent_trust.stats import tabulate

    rc = main(["run", "--wave", "1", "--mode", "replay", "--archive", str(data_dir / "archive_w1.jsonl"), "--out", str(tmp_path)])
    assert rc == EXIT_OK
    counts = tabulate(read_records(tmp_path / "records.jsonl"), wave=1)
    assert {k: (c.A, c.B, c.NA) for k, c in counts.items()} == {
        "w1_trust_hypothetical": (26, 82, 2),
        "w1_trust_incentivized": (103, 7, 0),
        "w1_nonsocial_hypothetical": (10, 100, 0),
        "w1_nonsocial_incentivized": (0, 110, 0),
    }


def test_run_replay_missing_fingerprint(tmp_path, data_dir):
    archive = tmp_path / "archive.jsonl"
    lines = (data_dir / "archive_w1.jsonl").read_text().splitlines(keepends=True)
    archive.write_text("".join(lines[:17] + lines[18:]))
    rc = main(["run", "--wave", "1", "--mode", "replay", "--archive", str(archive), "--out", str(tmp_path / "o")])
    assert rc == EXIT_TRIAL_FAILURES
    assert len(read_records(tmp_path / "o" / "records.jsonl")) == 439
    errors = (tmp_path / "o" / "errors.jsonl").read_text().splitlines()
    assert len(errors) == 1 and json.loads(errors[0])["error_type"] == "ArchiveMiss"


def test_run_replay_needs_archive(tmp_path):
    assert main(["run", "--mode", "replay", "--out", str(tmp_path)]) == EXIT_USAGE


def test_run_live_without_key(tmp_path, monkeypatch):
    monkeypatch.delenv("MI_API_KEY", raising=False)
    assert main(["run", "--mode", "live", "--out", str(tmp_path)]) == EXIT_USAGE


def test_analyze_outputs(tmp_path, capsys):
    _run(tmp_path, 1)
    capsys.readouterr()
    assert main(["analyze", "--out", str(tmp_path), "--wave", "1"]) == EXIT_OK
    text = capsys.readouterr().out
    assert re.search(r"chi2=108\.25\b", text) and re.search(r"chi2=8\.49\b", text)
    rows = json.loads((tmp_path / "analysis_w1.json").read_text())
    assert sum(r["kind"] == "logistic_fit" for r in rows) == 4


def test_analyze_missing_conditions(tmp_path, capsys):
    _run(tmp_path, 1)
    path = tmp_path / "records.jsonl"
    write_records(path, [r for r in read_records(path) if "trust" in r.condition])
    assert main(["analyze", "--out", str(tmp_path)]) == EXIT_ANALYSIS
    err = capsys.readouterr().err
    assert "w1_nonsocial_hypothetical" in err and "w1_nonsocial_incentivized" in err


def test_report_formats(tmp_path):
    _run(tmp_path, 1)
    assert main(["report", "--out", str(tmp_path), "--format", "csv"]) == EXIT_OK
    counts = list(csv.DictReader((tmp_path / "table1.csv").open()))
    assert len(counts) == 4 and all(int(r["total"]) == 110 for r in counts)
    assert len(list(csv.DictReader((tmp_path / "choices.csv").open()))) == 440

    assert main(["report", "--out", str(tmp_path), "--format", "markdown"]) == EXIT_OK
    md = (tmp_path / "report.md").read_text()
    assert "| Trust game incentivized | 103 | 7 | 0 |" in md

    assert main(["report", "--out", str(tmp_path), "--format", "svg"]) == EXIT_OK
    svg = (tmp_path / "choices.svg").read_text()
    panels = re.findall(r'<g class="panel" data-condition="([^"]+)" data-xmin="([\d.]+)" data-xmax="([\d.]+)"', svg)
    assert len(panels) == 4
    assert {(lo, hi) for _, lo, hi in panels} == {("5.30", "16.20")}


def test_report_empty_records_csv(tmp_path):
    (tmp_path / "records.jsonl").write_text("")
    assert main(["report", "--out", str(tmp_path), "--format", "csv"]) == EXIT_OK
    assert (tmp_path / "table1.csv").read_text() == "condition,A,B,NA,total\n"
    assert (tmp_path / "choices.csv").read_text().count("\n") == 1


def test_ledger_show_and_resolve(tmp_path, capsys):
    _run(tmp_path, 2)
    capsys.readouterr()
    assert main(["ledger", "show", "--out", str(tmp_path)]) == EXIT_OK
    shown = capsys.readouterr().out
    pending = [line.split("\t")[0] for line in shown.splitlines() if "\tpending\t" in line]
    assert len(pending) == 77
    assert "pending: 77" in shown

    trial = pending[0]
    cents = int(trial.rsplit("-", 1)[1])
    max_tokens = 3 * cents * 500
    assert main(["ledger", "resolve", trial, str(max_tokens + 1), "--out", str(tmp_path)]) == EXIT_USAGE
    assert main(["ledger", "resolve", trial, str(max_tokens), "--out", str(tmp_path)]) == EXIT_OK
    assert main(["ledger", "resolve", trial, "0", "--out", str(tmp_path)]) == EXIT_USAGE
    capsys.readouterr()
    main(["ledger", "show", "--out", str(tmp_path)])
    assert "pending: 76" in capsys.readouterr().out


def test_end_to_end_pipeline_is_byte_stable(tmp_path):
    outputs = []
    for name in ("x", "y"):
        out = tmp_path / name
        assert main(["params", "--out", str(out)]) == EXIT_OK
        assert _run(out, 2, seed=42) == EXIT_OK
        assert main(["analyze", "--out", str(out)]) == EXIT_OK
        for fmt in ("csv", "markdown", "svg"):
            assert main(["report", "--out", str(out), "--format", fmt]) == EXIT_OK
        outputs.append({p.name: p.read_bytes() for p in sorted(out.iterdir())})
    assert outputs[0] == outputs[1]
