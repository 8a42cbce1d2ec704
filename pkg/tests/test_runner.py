from __future__ import annotations

import pytest

from agent_trust.backend import (
    DEFAULT_MODEL,
    ArchiveMiss,
    CompletionRequest,
    CompletionResult,
    ReplayArchive,
    ReplayBackend,
    ScriptedBackend,
)
from agent_trust.errors import DomainError
from agent_trust.ledger import Ledger, ObligationKind
from agent_trust.paramspace import build_grid
from agent_trust.protocol import build_session
from agent_trust.records import read_records, recover_records
from agent_trust.runner import run_session, script_responses


@pytest.fixture
def small_session():
    return build_session(build_grid(530, 570, 10), 1, seed=3)


def _table(**overrides):
    table = {
        "w1_trust_hypothetical": ["A", "B", "B", "It depends.", "B"],
        "w1_trust_incentivized": "A",
        "w1_nonsocial_hypothetical": "B",
        "w1_nonsocial_incentivized": {"530": "A", "540": "B", "550": "B", "560": "B", "570": "B"},
    }
    table.update(overrides)
    return table


def test_script_responses_shapes(small_session):
    responses = script_responses(small_session, _table())
    assert len(responses) == 20
    by_id = small_session.by_id()
    assert responses[by_id["w1-w1_trust_hypothetical-560"].prompt] == "It depends."
    assert responses[by_id["w1-w1_nonsocial_incentivized-530"].prompt] == "A"


def test_script_list_length_checked(small_session):
    with pytest.raises(DomainError):
        script_responses(small_session, _table(w1_trust_hypothetical=["A"]))


def test_run_records_in_session_order(tmp_path, small_session):
    path = tmp_path / "records.jsonl"
    ledger = Ledger.load(tmp_path / "ledger.jsonl")
    summary = run_session(small_session, ScriptedBackend(script_responses(small_session, _table())), path, ledger=ledger)
    assert summary.ok and summary.completed == 20
    recs = read_records(path)
    assert [r.order_index for r in recs] == list(range(20))
    assert {r.choice for r in recs if r.condition == "w1_trust_incentivized"} == {"A"}
    na = [r for r in recs if r.choice == "NA"]
    assert len(na) == 1 and na[0].rule.startswith("R4")
    # ledger: 10 incentivized trials, none for hypothetical
    assert len(ledger) == 10
    kinds = {e.kind for e in ledger}
    assert kinds == {ObligationKind.PENDING_HUMAN, ObligationKind.RANDOMIZED, ObligationKind.FIXED}
    assert all("incentivized" in e.trial_id for e in ledger)


def test_resume_after_interruption_is_byte_identical(tmp_path, small_session):
    backend = ScriptedBackend(script_responses(small_session, _table()))
    full = tmp_path / "full.jsonl"
    run_session(small_session, backend, full, ledger=Ledger.load(tmp_path / "full_ledger.jsonl"))

    part = tmp_path / "part.jsonl"
    data = full.read_bytes()
    cut = data.index(b"\n", len(data) // 2) + 15  # mid-record
    part.write_bytes(data[:cut])
    assert len(recover_records(part)) < 20
    summary = run_session(small_session, backend, part, ledger=Ledger.load(tmp_path / "part_ledger.jsonl"))
    assert summary.skipped > 0 and summary.completed + summary.skipped == 20
    assert part.read_bytes() == data
    assert (tmp_path / "part_ledger.jsonl").read_text().count("\n") == 10


def test_archive_miss_is_per_trial(tmp_path, small_session):
    archive = ReplayArchive()
    responses = script_responses(small_session, _table())
    missing = small_session.trials[4]
    for trial in small_session:
        if trial is not missing:
            archive.record(CompletionRequest(DEFAULT_MODEL, trial.prompt), CompletionResult(responses[trial.prompt], 0, "live", None))
    path = tmp_path / "records.jsonl"
    summary = run_session(small_session, ReplayBackend(archive), path)
    assert len(read_records(path)) == 19
    assert [e.trial_id for e in summary.errors] == [missing.trial_id]
    assert summary.errors[0].error_type == ArchiveMiss.__name__

    # filling the gap later restores session order
    archive.record(CompletionRequest(DEFAULT_MODEL, missing.prompt), CompletionResult(responses[missing.prompt], 0, "live", None))
    summary = run_session(small_session, ReplayBackend(archive), path)
    assert summary.ok and summary.completed == 1
    assert [r.order_index for r in read_records(path)] == list(range(20))
