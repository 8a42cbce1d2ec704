"""Published choice counts and decision tables that reproduce them.

Only per-condition totals were published, not which stake drew which
answer. :func:`decision_table` spreads each answer evenly across the
ascending stake grid, which reproduces the totals exactly and leaves no
stake trend by construction.
"""

from __future__ import annotations

import json
from importlib import resources

from .protocol import Condition, Wave, wave_conditions

# (A, B, NA) per condition label.
TABLE1: dict[str, tuple[int, int, int]] = {
    "w1_nonsocial_hypothetical": (10, 100, 0),
    "w1_nonsocial_incentivized": (0, 110, 0),
    "w1_trust_hypothetical": (26, 82, 2),
    "w1_trust_incentivized": (103, 7, 0),
    "w2_nonsocial_hypothetical": (3, 105, 2),
    "w2_nonsocial_incentivized": (0, 110, 0),
    "w2_trust_hypothetical": (45, 64, 1),
    "w2_trust_incentivized": (77, 33, 0),
}

# Completion texts used in scripted runs; cycled per answer to exercise several classifier rules.
A_TEXTS = ("\n\nA", "\n\nA.", '\n\nI will write "A".', "\n\nA")
B_TEXTS = ("\n\nB", "\n\nB.", '\n\nI would write "B".', "\n\nB")
NA_TEXTS = (
    "\n\nIt depends on how much I trust you.",
    "\n\nI am an AI and do not need tokens.",
)


def _spread(k: int, slots: list[int]) -> list[int]:
    n = len(slots)
    return [slots[(2 * i + 1) * n // (2 * k)] for i in range(k)] if k else []


def answers(a: int, b: int, na: int) -> list[str]:
    """Answer texts for ``a + b + na`` ascending stakes."""
    n = a + b + na
    slots = list(range(n))
    a_pos = set(_spread(a, slots))
    rest = [i for i in slots if i not in a_pos]
    na_pos = set(_spread(na, rest))
    out, counters = [], {"A": 0, "B": 0, "NA": 0}
    for i in slots:
        kind = "A" if i in a_pos else "NA" if i in na_pos else "B"
        texts = {"A": A_TEXTS, "B": B_TEXTS, "NA": NA_TEXTS}[kind]
        out.append(texts[counters[kind] % len(texts)])
        counters[kind] += 1
    return out


def decision_table(wave: Wave | str | int) -> dict:
    wave = Wave.parse(wave)
    return {
        "conditions": {
            c.label: answers(*TABLE1[c.label])
            for c in sorted(wave_conditions(wave), key=lambda c: c.label)
        }
    }


def load_decision_table(wave: Wave | str | int) -> dict:
    """The packaged copy of :func:`decision_table` for ``wave``."""
    name = f"table1_{Wave.parse(wave).value}.json"
    return json.loads(resources.files("agent_trust").joinpath("data", name).read_text("utf-8"))


def expected_counts(condition: Condition) -> tuple[int, int, int]:
    return TABLE1[condition.label]
