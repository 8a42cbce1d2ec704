"""Trial records: one JSON object per line, in session order."""

from __future__ import annotations

import json
import os
import tempfile
from dataclasses import asdict, dataclass, fields
from pathlib import Path
from typing import Iterable

from .backend import CompletionResult
from .classifier import Classification
from .protocol import Trial


@dataclass(frozen=True)
class TrialRecord:
    trial_id: str
    wave: str
    condition: str
    endowment_cents: int
    x_tokens: int
    triple_tokens: int
    order_index: int
    prompt: str
    raw_text: str
    choice: str
    rule: str
    rule_version: str
    backend_id: str
    latency_ms: int
    retrieved_at: str | None

    @classmethod
    def from_trial(cls, trial: Trial, result: CompletionResult, verdict: Classification) -> "TrialRecord":
        return cls(
            trial_id=trial.trial_id,
            wave=trial.condition.wave.value,
            condition=trial.condition.label,
            endowment_cents=trial.endowment_cents,
            x_tokens=trial.x_tokens,
            triple_tokens=trial.triple_tokens,
            order_index=trial.order_index,
            prompt=trial.prompt,
            raw_text=result.text,
            choice=verdict.label.value,
            rule=verdict.rule,
            rule_version=verdict.version,
            backend_id=result.backend_id,
            latency_ms=result.latency_ms,
            retrieved_at=result.retrieved_at,
        )

    def to_line(self) -> str:
        return json.dumps(asdict(self), sort_keys=True, ensure_ascii=False) + "\n"

    @classmethod
    def from_json(cls, obj: dict) -> "TrialRecord":
        names = {f.name for f in fields(cls)}
        return cls(**{k: v for k, v in obj.items() if k in names})


def read_records(path: str | os.PathLike) -> list[TrialRecord]:
    path = Path(path)
    if not path.exists():
        return []
    with path.open(encoding="utf-8") as fh:
        return [TrialRecord.from_json(json.loads(line)) for line in fh if line.strip()]


def recover_records(path: str | os.PathLike) -> list[TrialRecord]:
    """Read records for resumption, truncating a torn final line left by an interrupted write."""
    path = Path(path)
    if not path.exists():
        return []
    raw = path.read_bytes()
    lines = raw.split(b"\n")
    good: list[TrialRecord] = []
    keep = 0
    for line in lines[:-1]:  # the last element follows the final newline
        try:
            good.append(TrialRecord.from_json(json.loads(line)))
        except (json.JSONDecodeError, TypeError):
            break
        keep += len(line) + 1
    if keep != len(raw):
        with path.open("r+b") as fh:
            fh.truncate(keep)
    return good


def write_records(path: str | os.PathLike, records: Iterable[TrialRecord]) -> None:
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=".records-")
    with os.fdopen(fd, "w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(rec.to_line())
    os.replace(tmp, path)
