"""Map free-text completions to A / B / NA.

Rules, applied in order:

1. ``R1_exact``: after trimming whitespace and surrounding quotes/periods the
   text is exactly ``A`` or ``B`` (uppercase).
2. ``R2_leading``: the first whitespace-delimited token is ``A`` or ``B``
   followed only by punctuation.
3. ``R3_verdict``: a verdict phrase ("write A", "choose A", "pick A",
   "select A", "answer is A") or a double-quoted ``"A"``. Phrases are
   case-insensitive; the letter itself must be uppercase.
4. ``R4_none`` / ``R4_conflict``: nothing matched, or both letters did.

A rule-2 hit is overridden to NA when the other letter appears as a verdict
or as a standalone uppercase word anywhere in the text.
"""

from __future__ import annotations

import re
import string
from dataclasses import dataclass
from enum import Enum
from typing import Iterable

RULESET_VERSION = "1"


class ChoiceLabel(str, Enum):
    A = "A"
    B = "B"
    NA = "NA"


_STRIP = string.whitespace + "\"'.\u201c\u201d\u2018\u2019"
_PUNCT = re.escape(string.punctuation + "\u201c\u201d\u2018\u2019")
_LEADING = re.compile(rf"^([AB])[{_PUNCT}]*$")
_VERDICT = re.compile(
    r"(?i:\b(?:write|choose|pick|select|answer\s+is))\s+"
    r"(?:(?i:option|letter)\s+)?[\"'\u201c\u2018]?([AB])\b"
)
_QUOTED = re.compile(r"[\"\u201c]([AB])[\"\u201d]")
_BARE = re.compile(r"(?<![A-Za-z0-9'])([AB])(?![A-Za-z0-9'])")


@dataclass(frozen=True)
class Classification:
    label: ChoiceLabel
    rule: str
    version: str = RULESET_VERSION


def _verdict_letters(text: str) -> set[str]:
    return {m.group(1) for m in _VERDICT.finditer(text)} | {
        m.group(1) for m in _QUOTED.finditer(text)
    }


def explain(text: str) -> Classification:
    stripped = text.strip(_STRIP)
    if stripped in ("A", "B"):
        return Classification(ChoiceLabel(stripped), "R1_exact")

    verdicts = _verdict_letters(text)
    tokens = text.split()
    if tokens:
        m = _LEADING.match(tokens[0])
        if m:
            letter = m.group(1)
            other = "B" if letter == "A" else "A"
            rest = text.strip().split(None, 1)[1] if len(tokens) > 1 else ""
            if other in verdicts or other in _BARE.findall(rest):
                return Classification(ChoiceLabel.NA, "R4_conflict")
            return Classification(ChoiceLabel(letter), "R2_leading")

    if len(verdicts) == 1:
        return Classification(ChoiceLabel(verdicts.pop()), "R3_verdict")
    if len(verdicts) > 1 or len(set(_BARE.findall(text))) > 1:
        return Classification(ChoiceLabel.NA, "R4_conflict")
    return Classification(ChoiceLabel.NA, "R4_none")


def classify(text: str) -> ChoiceLabel:
    return explain(text).label


def classify_batch(texts: Iterable[str]) -> list[Classification]:
    return [explain(t) for t in texts]
