"""Token obligations created by incentivized trials.

Entries are immutable; resolving a pending trust-game entry returns a new
entry and :class:`Ledger` swaps it in under a lock.
"""

from __future__ import annotations

import hashlib
import json
import os
import random
import tempfile
import threading
from dataclasses import dataclass, replace
from enum import Enum
from pathlib import Path
from typing import Iterable, Iterator, NamedTuple

from .classifier import ChoiceLabel
from .errors import DomainError, LookupFailure, StateError
from .protocol import Incentive, Task, Trial


class ObligationKind(str, Enum):
    FIXED = "fixed"
    PENDING_HUMAN = "pending_human"
    RANDOMIZED = "randomized"
    # NA responses: audit entry, nothing owed.
    UNRESOLVED_CHOICE = "unresolved_choice"


@dataclass(frozen=True)
class LedgerEntry:
    trial_id: str
    kind: ObligationKind
    x_tokens: int
    max_tokens: int
    resolved: bool
    resolution_tokens: int | None = None
    drawn_tokens: int | None = None
    rng_seed: int | None = None

    @property
    def pending(self) -> bool:
        return self.kind is ObligationKind.PENDING_HUMAN and not self.resolved

    def to_json(self) -> dict:
        out = {
            "trial_id": self.trial_id,
            "kind": self.kind.value,
            "x_tokens": self.x_tokens,
            "max_tokens": self.max_tokens,
            "resolved": self.resolved,
        }
        for key in ("drawn_tokens", "rng_seed", "resolution_tokens"):
            value = getattr(self, key)
            if value is not None:
                out[key] = value
        return out

    @classmethod
    def from_json(cls, obj: dict) -> "LedgerEntry":
        return cls(
            trial_id=obj["trial_id"],
            kind=ObligationKind(obj["kind"]),
            x_tokens=int(obj["x_tokens"]),
            max_tokens=int(obj["max_tokens"]),
            resolved=bool(obj["resolved"]),
            resolution_tokens=obj.get("resolution_tokens"),
            drawn_tokens=obj.get("drawn_tokens"),
            rng_seed=obj.get("rng_seed"),
        )


def derive_seed(session_seed: int, trial_id: str) -> int:
    """Per-trial draw seed, stable across runs and platforms."""
    digest = hashlib.sha256(f"{session_seed}:{trial_id}".encode()).digest()
    return int.from_bytes(digest[:8], "big")


def draw_uniform(max_tokens: int, rng_seed: int) -> int:
    return random.Random(rng_seed).randint(0, max_tokens)


def settle(trial: Trial, choice: ChoiceLabel | str, rng_seed: int) -> LedgerEntry:
    if trial.condition.incentive is not Incentive.REAL:
        raise DomainError(f"{trial.trial_id}: hypothetical trials carry no obligation")
    choice = ChoiceLabel(choice)
    common = dict(trial_id=trial.trial_id, x_tokens=trial.x_tokens, max_tokens=trial.triple_tokens)
    if choice is ChoiceLabel.NA:
        return LedgerEntry(kind=ObligationKind.UNRESOLVED_CHOICE, resolved=True,
                           resolution_tokens=0, **common)
    if choice is ChoiceLabel.B:
        return LedgerEntry(kind=ObligationKind.FIXED, resolved=True,
                           resolution_tokens=trial.x_tokens, **common)
    if trial.condition.task is Task.TRUST:
        return LedgerEntry(kind=ObligationKind.PENDING_HUMAN, resolved=False, **common)
    drawn = draw_uniform(trial.triple_tokens, rng_seed)
    return LedgerEntry(kind=ObligationKind.RANDOMIZED, resolved=True, resolution_tokens=drawn,
                       drawn_tokens=drawn, rng_seed=rng_seed, **common)


def resolve_pending(entry: LedgerEntry, human_tokens: int) -> LedgerEntry:
    if entry.kind is not ObligationKind.PENDING_HUMAN:
        raise StateError(f"{entry.trial_id}: only pending trust-game entries can be resolved")
    if entry.resolved:
        raise StateError(f"{entry.trial_id}: already resolved")
    if not 0 <= human_tokens <= entry.max_tokens:
        raise DomainError(
            f"{entry.trial_id}: {human_tokens} outside [0, {entry.max_tokens}]"
        )
    return replace(entry, resolved=True, resolution_tokens=human_tokens)


class Totals(NamedTuple):
    resolved_tokens: int
    pending_count: int
    pending_max_exposure: int


def total_owed(entries: Iterable[LedgerEntry]) -> Totals:
    resolved = pending = exposure = 0
    for e in entries:
        if e.pending:
            pending += 1
            exposure += e.max_tokens
        elif e.resolution_tokens:
            resolved += e.resolution_tokens
    return Totals(resolved, pending, exposure)


class Ledger:
    """Ordered collection of entries backed by an optional JSONL file."""

    def __init__(self, entries: Iterable[LedgerEntry] = (), path: str | os.PathLike | None = None):
        self._entries: dict[str, LedgerEntry] = {}
        self._lock = threading.Lock()
        self.path = Path(path) if path is not None else None
        for e in entries:
            self._entries[e.trial_id] = e

    @classmethod
    def load(cls, path: str | os.PathLike) -> "Ledger":
        path = Path(path)
        entries = []
        if path.exists():
            with path.open(encoding="utf-8") as fh:
                entries = [LedgerEntry.from_json(json.loads(line)) for line in fh if line.strip()]
        return cls(entries, path)

    def __contains__(self, trial_id: str) -> bool:
        return trial_id in self._entries

    def __iter__(self) -> Iterator[LedgerEntry]:
        with self._lock:
            return iter(list(self._entries.values()))

    def __len__(self) -> int:
        return len(self._entries)

    def get(self, trial_id: str) -> LedgerEntry:
        try:
            return self._entries[trial_id]
        except KeyError:
            raise LookupFailure(f"no ledger entry for {trial_id}") from None

    def append(self, entry: LedgerEntry) -> None:
        with self._lock:
            if entry.trial_id in self._entries:
                raise StateError(f"{entry.trial_id}: ledger entry already exists")
            self._entries[entry.trial_id] = entry
            if self.path is not None:
                with self.path.open("a", encoding="utf-8") as fh:
                    fh.write(json.dumps(entry.to_json(), sort_keys=True) + "\n")

    def resolve(self, trial_id: str, human_tokens: int) -> LedgerEntry:
        with self._lock:
            updated = resolve_pending(self.get(trial_id), human_tokens)
            self._entries[trial_id] = updated
            if self.path is not None:
                self._rewrite()
            return updated

    def totals(self) -> Totals:
        return total_owed(self)

    def _rewrite(self) -> None:
        fd, tmp = tempfile.mkstemp(dir=self.path.parent, prefix=".ledger-")
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            for e in self._entries.values():
                fh.write(json.dumps(e.to_json(), sort_keys=True) + "\n")
        os.replace(tmp, self.path)
