"""Sequential session execution with resume, classification and settlement."""

from __future__ import annotations

import json
import logging
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping

from .backend import (
    DEFAULT_MAX_OUTPUT_TOKENS,
    DEFAULT_MODEL,
    DEFAULT_TEMPERATURE,
    Backend,
    BackendError,
    CompletionRequest,
    ScriptedBackend,
)
from .classifier import explain
from .errors import DomainError
from .ledger import Ledger, derive_seed, settle
from .protocol import Incentive, Session
from .records import TrialRecord, recover_records, write_records

logger = logging.getLogger(__name__)


@dataclass
class TrialError:
    trial_id: str
    order_index: int
    error_type: str
    message: str


@dataclass
class RunSummary:
    total: int
    completed: int = 0
    skipped: int = 0
    errors: list[TrialError] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.errors


def run_session(
    session: Session,
    backend: Backend,
    records_path: str | os.PathLike,
    *,
    ledger: Ledger | None = None,
    model_name: str = DEFAULT_MODEL,
    temperature: float = DEFAULT_TEMPERATURE,
    max_output_tokens: int = DEFAULT_MAX_OUTPUT_TOKENS,
) -> RunSummary:
    """Dispatch every trial not already in ``records_path``, in session order.

    Each record is flushed as soon as it is classified, so an interrupted
    run resumes from the last complete line. Backend failures are collected
    per trial rather than aborting the session.
    """
    records_path = Path(records_path)
    existing = recover_records(records_path)
    done = {r.trial_id: r.choice for r in existing}
    summary = RunSummary(total=len(session), skipped=len(done))

    with records_path.open("a", encoding="utf-8") as out:
        for trial in session:
            if trial.trial_id in done:
                if ledger is not None:
                    _settle_once(ledger, session, trial, done[trial.trial_id])
                continue
            request = CompletionRequest(model_name, trial.prompt, temperature, max_output_tokens)
            try:
                result = backend.complete(request)
            except BackendError as exc:
                logger.error("%s: %s", trial.trial_id, exc)
                summary.errors.append(
                    TrialError(trial.trial_id, trial.order_index, type(exc).__name__, str(exc))
                )
                continue
            rec = TrialRecord.from_trial(trial, result, explain(result.text))
            out.write(rec.to_line())
            out.flush()
            existing.append(rec)
            summary.completed += 1
            if ledger is not None:
                _settle_once(ledger, session, trial, rec.choice)

    # Trials filled in on a later pass land at the end of the file; restore session order.
    if [r.order_index for r in existing] != sorted(r.order_index for r in existing):
        write_records(records_path, sorted(existing, key=lambda r: r.order_index))
    return summary


def _settle_once(ledger: Ledger, session: Session, trial, choice: str) -> None:
    if trial.condition.incentive is not Incentive.REAL or trial.trial_id in ledger:
        return
    ledger.append(settle(trial, choice, derive_seed(session.seed, trial.trial_id)))


def load_script(path: str | os.PathLike) -> dict:
    with open(path, encoding="utf-8") as fh:
        return json.load(fh)


def script_responses(session: Session, table: Mapping) -> dict[str, str]:
    """Expand a decision table into the prompt -> text map a ScriptedBackend serves.

    ``table`` maps a condition label to one of:

    * a string, returned for every stake;
    * a list of strings, one per stake in ascending stake order;
    * a mapping from endowment cents (as a string) to text.

    Conditions absent from the table produce no responses, so their trials
    miss at run time.
    """
    table = table.get("conditions", table)
    by_condition: dict[str, list] = {}
    for trial in session:
        by_condition.setdefault(trial.condition.label, []).append(trial)
    responses: dict[str, str] = {}
    for label, trials in by_condition.items():
        entry = table.get(label)
        if entry is None:
            continue
        trials = sorted(trials, key=lambda t: t.endowment_cents)
        if isinstance(entry, str):
            texts = {t.prompt: entry for t in trials}
        elif isinstance(entry, list):
            if len(entry) != len(trials):
                raise DomainError(f"{label}: script has {len(entry)} answers for {len(trials)} stakes")
            texts = {t.prompt: s for t, s in zip(trials, entry)}
        elif isinstance(entry, Mapping):
            texts = {t.prompt: entry[str(t.endowment_cents)] for t in trials if str(t.endowment_cents) in entry}
        else:
            raise DomainError(f"{label}: unsupported script entry {type(entry).__name__}")
        responses.update(texts)
    return responses


def scripted_backend(session: Session, table: Mapping) -> ScriptedBackend:
    return ScriptedBackend(script_responses(session, table))
