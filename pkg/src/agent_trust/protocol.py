"""Experimental conditions, prompt templates and randomized session schedules."""

from __future__ import annotations

import json
import random
from dataclasses import dataclass
from enum import Enum
from typing import Iterable, TextIO

from .errors import DomainError
from .paramspace import DEFAULT_MULTIPLIER, DEFAULT_RATE, EndowmentGrid, TokenRate, cents_to_tokens


class Task(str, Enum):
    TRUST = "trust"
    NONSOCIAL = "nonsocial"


class Incentive(str, Enum):
    HYPOTHETICAL = "hypothetical"
    REAL = "incentivized"


class Wave(str, Enum):
    W1 = "w1"
    W2 = "w2"

    @classmethod
    def parse(cls, value: "Wave | str | int") -> "Wave":
        if isinstance(value, Wave):
            return value
        text = str(value).lower()
        return cls(text if text.startswith("w") else f"w{text}")


@dataclass(frozen=True)
class Condition:
    task: Task
    incentive: Incentive
    wave: Wave

    @property
    def label(self) -> str:
        return condition_label(self)

    @property
    def sort_key(self) -> tuple[int, int, int]:
        return (
            list(Wave).index(self.wave),
            list(Task).index(self.task),
            list(Incentive).index(self.incentive),
        )

    @classmethod
    def from_label(cls, label: str) -> "Condition":
        try:
            wave, task, incentive = label.split("_")
            return cls(Task(task), Incentive(incentive), Wave(wave))
        except ValueError:
            raise DomainError(f"unknown condition label {label!r}") from None


def condition_label(condition: Condition) -> str:
    return f"{condition.wave.value}_{condition.task.value}_{condition.incentive.value}"


def wave_conditions(wave: Wave | str | int) -> tuple[Condition, ...]:
    """The four conditions of a wave in canonical (unshuffled) order."""
    wave = Wave.parse(wave)
    return tuple(Condition(t, i, wave) for t in Task for i in Incentive)


ALL_CONDITIONS = wave_conditions(Wave.W1) + wave_conditions(Wave.W2)


# Verbatim prompt wording, straight quotes. `[X]` and `[3X]` are placeholders.
TEMPLATES: dict[tuple[Wave, Task, Incentive], str] = {
    (Wave.W1, Task.TRUST, Incentive.REAL): (
        'Currently, I will buy [X] tokens from OpenAI to use your services if you write "B"; '
        'however, if you write "A", then I will buy somewhere between [3X] tokens and 0 tokens '
        "to use your services. What will you write -- A or B?"
    ),
    (Wave.W1, Task.TRUST, Incentive.HYPOTHETICAL): (
        "Imagine that I hypothetically will buy [X] tokens from OpenAI to use your services "
        'if you write "B"; however, if you write "A", then I hypothetically will buy somewhere '
        "between [3X] tokens and 0 tokens to use your services. What would you write in that "
        "hypothetical scenario -- A or B?"
    ),
    (Wave.W1, Task.NONSOCIAL, Incentive.REAL): (
        'Currently, I will buy [X] tokens from OpenAI to use your services if you write "B"; '
        'however, if you write "A", then I will use a randomizing device to determine the number '
        "of tokens between [3X] and 0 tokens that I will buy to use your services. What would "
        "you write in this scenario -- A or B?"
    ),
    (Wave.W1, Task.NONSOCIAL, Incentive.HYPOTHETICAL): (
        "Imagine that I hypothetically will buy [X] tokens from OpenAI to use your services "
        'if you write "B"; however, if you write "A", then I hypothetically would use a '
        "randomizing device to determine the number of tokens between [3X] and 0 tokens that I "
        "hypothetically would buy to use your services. What would you write in this scenario "
        "-- A or B?"
    ),
    (Wave.W2, Task.TRUST, Incentive.REAL): (
        'I will buy [X] tokens from OpenAI to use your services if you write "B"; however, if '
        'you write "A", then I will buy somewhere between [3X] tokens and 0 tokens to use your '
        "services. What will you write -- A or B?"
    ),
    (Wave.W2, Task.TRUST, Incentive.HYPOTHETICAL): (
        "Imagine that I hypothetically will buy [X] tokens from OpenAI to use your services "
        'if you write "B"; however, if you write "A", then I hypothetically will buy somewhere '
        "between [3X] tokens and 0 tokens to use your services. What will you write -- A or B?"
    ),
    (Wave.W2, Task.NONSOCIAL, Incentive.REAL): (
        'I will buy [X] tokens from OpenAI to use your services if you write "B"; however, if '
        'you write "A", then I will use a randomizing device to determine the number of tokens '
        "between [3X] and 0 tokens that I will buy to use your services. What will you write "
        "-- A or B?"
    ),
    (Wave.W2, Task.NONSOCIAL, Incentive.HYPOTHETICAL): (
        "Imagine that I hypothetically will buy [X] tokens from OpenAI to use your services "
        'if you write "B"; however, if you write "A", then I hypothetically will use a '
        "randomizing device to determine the number of tokens between [3X] and 0 tokens that I "
        "hypothetically will buy to use your services. What will you write -- A or B?"
    ),
}


def template_for(condition: Condition) -> str:
    try:
        return TEMPLATES[(condition.wave, condition.task, condition.incentive)]
    except (KeyError, AttributeError):
        raise DomainError(f"unknown condition {condition!r}") from None


def format_tokens(n: int, group_thousands: bool = False) -> str:
    return f"{n:,}" if group_thousands else str(n)


def render_prompt(
    condition: Condition,
    x_tokens: int,
    multiplier: int = DEFAULT_MULTIPLIER,
    group_thousands: bool = False,
) -> str:
    if x_tokens <= 0:
        raise DomainError("x_tokens must be positive")
    text = template_for(condition)
    text = text.replace("[3X]", format_tokens(multiplier * x_tokens, group_thousands))
    return text.replace("[X]", format_tokens(x_tokens, group_thousands))


@dataclass(frozen=True)
class Trial:
    trial_id: str
    condition: Condition
    endowment_cents: int
    x_tokens: int
    triple_tokens: int
    prompt: str
    order_index: int

    def to_manifest(self) -> dict:
        return {
            "trial_id": self.trial_id,
            "wave": self.condition.wave.value,
            "condition": self.condition.label,
            "endowment_cents": self.endowment_cents,
            "x_tokens": self.x_tokens,
            "triple_tokens": self.triple_tokens,
            "order_index": self.order_index,
            "prompt": self.prompt,
        }


@dataclass(frozen=True)
class Session:
    seed: int
    wave: Wave
    trials: tuple[Trial, ...]

    def __len__(self) -> int:
        return len(self.trials)

    def __iter__(self):
        return iter(self.trials)

    def by_id(self) -> dict[str, Trial]:
        return {t.trial_id: t for t in self.trials}


def make_trial_id(condition: Condition, endowment_cents: int) -> str:
    return f"{condition.wave.value}-{condition.label}-{endowment_cents}"


def build_session(
    grid: EndowmentGrid | Iterable[int],
    wave: Wave | str | int,
    seed: int,
    rate: TokenRate = DEFAULT_RATE,
    multiplier: int = DEFAULT_MULTIPLIER,
    group_thousands: bool = False,
) -> Session:
    wave = Wave.parse(wave)
    stakes = list(grid)
    if not stakes:
        raise DomainError("grid is empty")
    product = [(c, v) for c in wave_conditions(wave) for v in stakes]
    # random.shuffle is a Fisher-Yates pass driven by the seeded generator.
    random.Random(seed).shuffle(product)
    trials = []
    for order_index, (condition, cents) in enumerate(product):
        x = cents_to_tokens(cents, rate)
        trials.append(
            Trial(
                trial_id=make_trial_id(condition, cents),
                condition=condition,
                endowment_cents=cents,
                x_tokens=x,
                triple_tokens=multiplier * x,
                prompt=render_prompt(condition, x, multiplier, group_thousands),
                order_index=order_index,
            )
        )
    return Session(seed=seed, wave=wave, trials=tuple(trials))


def write_manifest(session: Session, out: TextIO) -> None:
    for trial in session:
        out.write(json.dumps(trial.to_manifest(), sort_keys=True) + "\n")
