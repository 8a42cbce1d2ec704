"""Table 1 style counts and choice-by-stake output (CSV, Markdown, SVG)."""

from __future__ import annotations

import csv
import io
from typing import Sequence
from xml.sax.saxutils import escape

from .protocol import Condition
from .records import TrialRecord
from .stats import tabulate

COUNT_COLUMNS = ("condition", "A", "B", "NA", "total")
CHOICE_COLUMNS = ("condition", "endowment_usd", "x_tokens", "choice", "trial_id")

_DISPLAY = {
    ("nonsocial", "hypothetical"): "Non-social hypothetical",
    ("nonsocial", "incentivized"): "Non-social incentivized",
    ("trust", "hypothetical"): "Trust game hypothetical",
    ("trust", "incentivized"): "Trust game incentivized",
}

# Non-social rows first, matching the printed table.
def _row_order(label: str) -> tuple:
    cond = Condition.from_label(label)
    return (cond.wave.value, cond.task.value != "nonsocial", cond.incentive.value != "hypothetical")


def display_name(label: str) -> str:
    cond = Condition.from_label(label)
    return _DISPLAY[(cond.task.value, cond.incentive.value)]


def _counts(records: Sequence[TrialRecord]):
    table = tabulate(records)
    return [(label, table[label]) for label in sorted(table, key=_row_order)]


def _choice_rows(records: Sequence[TrialRecord]):
    ordered = sorted(records, key=lambda r: (_row_order(r.condition), r.endowment_cents))
    for r in ordered:
        yield (r.condition, f"{r.endowment_cents / 100:.2f}", r.x_tokens, r.choice, r.trial_id)


def counts_csv(records: Sequence[TrialRecord]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(COUNT_COLUMNS)
    for label, c in _counts(records):
        w.writerow((label, c.A, c.B, c.NA, c.total))
    return buf.getvalue()


def choices_csv(records: Sequence[TrialRecord]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CHOICE_COLUMNS)
    w.writerows(_choice_rows(records))
    return buf.getvalue()


def markdown(records: Sequence[TrialRecord]) -> str:
    lines = ["| Condition | A | B | N/A |", "|---|---:|---:|---:|"]
    for label, c in _counts(records):
        lines.append(f"| {display_name(label)} | {c.A} | {c.B} | {c.NA} |")
    lines += ["", "| Condition | Stake (USD) | X (tokens) | Choice |", "|---|---:|---:|:---:|"]
    for label, usd, x, choice, _ in _choice_rows(records):
        lines.append(f"| {display_name(label)} | {usd} | {x} | {choice} |")
    return "\n".join(lines) + "\n"


def svg(records: Sequence[TrialRecord], width: int = 720, panel_height: int = 90) -> str:
    """Strip plot: one panel per condition, stake on x, choice (A/B/NA) on y."""
    panels = [label for label, _ in _counts(records)]
    stakes = [r.endowment_cents / 100 for r in records]
    lo, hi = (min(stakes), max(stakes)) if stakes else (0.0, 1.0)
    if hi == lo:
        hi = lo + 1.0
    left, right, top = 170, 20, 20
    plot_w = width - left - right
    height = top + panel_height * len(panels) + 40
    levels = {"A": 0.2, "B": 0.5, "NA": 0.8}

    def sx(v: float) -> float:
        return left + (v - lo) / (hi - lo) * plot_w

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="11">',
        f'<rect width="{width}" height="{height}" fill="white"/>',
    ]
    for i, label in enumerate(panels):
        y0 = top + i * panel_height
        out.append(
            f'<g class="panel" data-condition="{escape(label)}" data-xmin="{lo:.2f}" data-xmax="{hi:.2f}">'
        )
        out.append(
            f'<rect x="{left}" y="{y0}" width="{plot_w}" height="{panel_height - 10}" '
            'fill="none" stroke="#999"/>'
        )
        out.append(f'<text x="5" y="{y0 + panel_height / 2:.1f}">{escape(display_name(label))}</text>')
        for choice, frac in levels.items():
            yy = y0 + frac * (panel_height - 10)
            out.append(f'<text x="{left - 25}" y="{yy + 4:.1f}">{choice}</text>')
        for r in records:
            if r.condition != label:
                continue
            yy = y0 + levels[r.choice] * (panel_height - 10)
            fill = "#c0392b" if r.choice == "A" else "#2c3e50"
            out.append(f'<circle cx="{sx(r.endowment_cents / 100):.2f}" cy="{yy:.2f}" r="2.5" fill="{fill}"/>')
        out.append("</g>")
    axis_y = top + panel_height * len(panels) + 5
    out.append(f'<text x="{left}" y="{axis_y + 12}">${lo:.2f}</text>')
    out.append(f'<text x="{left + plot_w - 40}" y="{axis_y + 12}">${hi:.2f}</text>')
    out.append(
        f'<text x="{left + plot_w / 2 - 40:.1f}" y="{axis_y + 28}">Stake (USD)</text>'
    )
    out.append("</svg>")
    return "\n".join(out) + "\n"
