"""Stake grid derivation: historical endowments, inflation, quartiles, tokens.

All money is integer cents. Rounding goes through :class:`fractions.Fraction`
so that half-cent cases are decided exactly, never by float representation.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from decimal import Decimal, InvalidOperation
from fractions import Fraction
from typing import Iterable, Mapping, TextIO

from .errors import DomainError, LookupFailure, RowError, SchemaError

# Published fallback bounds and constants.
DEFAULT_Q1_CENTS = 530
DEFAULT_Q3_CENTS = 1620
DEFAULT_STEP_CENTS = 10
DEFAULT_MULTIPLIER = 3
DEFAULT_RATE_USD_PER_1000 = "0.02"

HISTORY_COLUMNS = ("study_id", "year", "endowment_usd", "multiplier")
INFLATION_COLUMNS = ("from_year", "to_year", "factor")


def round_half_away(value: Fraction | int) -> int:
    """Round an exact rational to the nearest integer, ties away from zero."""
    value = Fraction(value)
    sign = -1 if value < 0 else 1
    magnitude = abs(value)
    whole, rest = divmod(magnitude.numerator, magnitude.denominator)
    if 2 * rest >= magnitude.denominator:
        whole += 1
    return sign * whole


def _to_fraction(text: str) -> Fraction:
    # Decimal first so "1.25" is read as 5/4 rather than a binary approximation.
    return Fraction(Decimal(text.strip()))


@dataclass(frozen=True)
class EndowmentObservation:
    study_id: str
    year: int
    endowment_nominal_cents: int
    multiplier: int

    def __post_init__(self) -> None:
        if self.endowment_nominal_cents <= 0:
            raise DomainError("endowment must be positive")
        if self.multiplier < 1:
            raise DomainError("multiplier must be >= 1")


@dataclass(frozen=True)
class InflationTable:
    entries: Mapping[tuple[int, int], Fraction] = field(default_factory=dict)

    def __post_init__(self) -> None:
        for (y0, y1), factor in self.entries.items():
            if factor <= 0:
                raise DomainError(f"inflation factor for {y0}->{y1} must be positive")
            if y0 == y1 and factor != 1:
                raise DomainError(f"inflation factor for {y0}->{y1} must be 1")

    def factor(self, from_year: int, to_year: int) -> Fraction:
        if from_year == to_year:
            return Fraction(1)
        try:
            return Fraction(self.entries[(from_year, to_year)])
        except KeyError:
            raise LookupFailure(f"no inflation factor for {from_year} -> {to_year}") from None


@dataclass(frozen=True)
class EndowmentGrid:
    values_cents: tuple[int, ...]
    step_cents: int
    q1_cents: int
    q3_cents: int

    def __len__(self) -> int:
        return len(self.values_cents)

    def __iter__(self):
        return iter(self.values_cents)


@dataclass(frozen=True)
class TokenRate:
    usd_per_1000_tokens: Fraction

    def __post_init__(self) -> None:
        if self.usd_per_1000_tokens <= 0:
            raise DomainError("token rate must be positive")

    @classmethod
    def parse(cls, text: str | float | Fraction) -> "TokenRate":
        if isinstance(text, Fraction):
            return cls(text)
        return cls(_to_fraction(str(text)))


DEFAULT_RATE = TokenRate.parse(DEFAULT_RATE_USD_PER_1000)


def _check_header(reader: csv.DictReader, required: Iterable[str]) -> None:
    present = set(reader.fieldnames or ())
    missing = [c for c in required if c not in present]
    if missing:
        raise SchemaError(f"missing column(s): {', '.join(missing)}")


def load_endowment_history(source: TextIO) -> list[EndowmentObservation]:
    """Parse a ``study_id,year,endowment_usd,multiplier`` table.

    Row indices in errors are 1-based data rows (the header is row 0).
    """
    reader = csv.DictReader(source)
    _check_header(reader, HISTORY_COLUMNS)
    out = []
    for i, row in enumerate(reader, start=1):
        try:
            usd = _to_fraction(row["endowment_usd"])
        except (InvalidOperation, ValueError, AttributeError):
            raise RowError(i, f"non-numeric endowment {row['endowment_usd']!r}") from None
        try:
            year = int(row["year"])
            multiplier = int(row["multiplier"])
        except (TypeError, ValueError):
            raise RowError(i, "year and multiplier must be integers") from None
        try:
            out.append(
                EndowmentObservation(
                    study_id=row["study_id"],
                    year=year,
                    endowment_nominal_cents=round_half_away(usd * 100),
                    multiplier=multiplier,
                )
            )
        except DomainError as exc:
            raise RowError(i, str(exc)) from None
    return out


def load_inflation_table(source: TextIO) -> InflationTable:
    reader = csv.DictReader(source)
    _check_header(reader, INFLATION_COLUMNS)
    entries: dict[tuple[int, int], Fraction] = {}
    for i, row in enumerate(reader, start=1):
        try:
            key = (int(row["from_year"]), int(row["to_year"]))
            entries[key] = _to_fraction(row["factor"])
        except (InvalidOperation, TypeError, ValueError):
            raise RowError(i, "malformed inflation row") from None
    try:
        return InflationTable(entries)
    except DomainError as exc:
        raise RowError(0, str(exc)) from None


def adjust_for_inflation(
    nominal_cents: int, from_year: int, to_year: int, table: InflationTable
) -> int:
    return round_half_away(nominal_cents * table.factor(from_year, to_year))


def _percentile(sorted_values: list[int], p: Fraction) -> Fraction:
    # Order-statistic interpolation at 1-based position 1 + (n-1)p.
    pos = p * (len(sorted_values) - 1)
    lo = pos.numerator // pos.denominator
    frac = pos - lo
    if lo + 1 >= len(sorted_values):
        return Fraction(sorted_values[-1])
    return sorted_values[lo] + frac * (sorted_values[lo + 1] - sorted_values[lo])


def quartiles(values: Iterable[int], round_to_cents: int = 10) -> tuple[int, int]:
    """First and third quartiles, each rounded to the nearest ``round_to_cents``."""
    ordered = sorted(values)
    if not ordered:
        raise DomainError("quartiles of an empty list")
    q1 = _percentile(ordered, Fraction(1, 4))
    q3 = _percentile(ordered, Fraction(3, 4))
    return (
        round_half_away(q1 / round_to_cents) * round_to_cents,
        round_half_away(q3 / round_to_cents) * round_to_cents,
    )


def derive_bounds(
    history: Iterable[EndowmentObservation], table: InflationTable, to_year: int
) -> tuple[int, int]:
    adjusted = [
        adjust_for_inflation(obs.endowment_nominal_cents, obs.year, to_year, table)
        for obs in history
    ]
    return quartiles(adjusted)


def build_grid(q1_cents: int, q3_cents: int, step_cents: int = DEFAULT_STEP_CENTS) -> EndowmentGrid:
    if step_cents <= 0:
        raise DomainError("step must be positive")
    if q1_cents > q3_cents:
        raise DomainError(f"q1 ({q1_cents}) exceeds q3 ({q3_cents})")
    if q1_cents <= 0:
        raise DomainError("stakes must be positive")
    span = q3_cents - q1_cents
    if span % step_cents:
        raise DomainError(
            f"span {q1_cents}..{q3_cents} is not a multiple of step {step_cents}"
        )
    values = tuple(range(q1_cents, q3_cents + 1, step_cents))
    return EndowmentGrid(values, step_cents, q1_cents, q3_cents)


def default_grid() -> EndowmentGrid:
    return build_grid(DEFAULT_Q1_CENTS, DEFAULT_Q3_CENTS, DEFAULT_STEP_CENTS)


def cents_to_tokens(cents: int, rate: TokenRate = DEFAULT_RATE) -> int:
    if cents < 0:
        raise DomainError("cents must be non-negative")
    return round_half_away(Fraction(cents, 100) / rate.usd_per_1000_tokens * 1000)
