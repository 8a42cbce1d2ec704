from __future__ import annotations

import io
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from agent_trust.errors import DomainError, LookupFailure, RowError, SchemaError
from agent_trust.paramspace import (
    DEFAULT_RATE,
    InflationTable,
    TokenRate,
    adjust_for_inflation,
    build_grid,
    cents_to_tokens,
    default_grid,
    derive_bounds,
    load_endowment_history,
    load_inflation_table,
    quartiles,
    round_half_away,
)

HEADER = "study_id,year,endowment_usd,multiplier\n"


def test_history_row_maps_to_cents():
    obs = load_endowment_history(io.StringIO(HEADER + "s1,1995,10.00,3\n"))
    assert len(obs) == 1
    assert obs[0].study_id == "s1"
    assert obs[0].year == 1995
    assert obs[0].endowment_nominal_cents == 1000
    assert obs[0].multiplier == 3


def test_history_header_only_is_empty():
    assert load_endowment_history(io.StringIO(HEADER)) == []


def test_history_bad_endowment_names_row():
    src = HEADER + "s1,1995,10.00,3\ns2,1996,abc,3\n"
    with pytest.raises(RowError) as err:
        load_endowment_history(io.StringIO(src))
    assert err.value.row_index == 2
    assert "row 2" in str(err.value)


def test_history_missing_column():
    with pytest.raises(SchemaError, match="multiplier"):
        load_endowment_history(io.StringIO("study_id,year,endowment_usd\ns1,1995,10\n"))


def test_history_rejects_zero_endowment():
    with pytest.raises(RowError):
        load_endowment_history(io.StringIO(HEADER + "s1,1995,0,3\n"))


def test_inflation_table_load_and_lookup():
    table = load_inflation_table(io.StringIO("from_year,to_year,factor\n1995,2022,1.25\n"))
    assert table.factor(1995, 2022) == Fraction(5, 4)
    assert table.factor(2001, 2001) == 1
    with pytest.raises(LookupFailure, match="1996 -> 2022"):
        table.factor(1996, 2022)


def test_inflation_table_rejects_nonpositive():
    with pytest.raises(DomainError):
        InflationTable({(1990, 2000): Fraction(0)})


@pytest.mark.parametrize(
    "cents, factor, expected",
    [(1000, Fraction(1), 1000), (1000, Fraction(5, 4), 1250), (533, Fraction(3, 2), 800)],
)
def test_adjust_for_inflation(cents, factor, expected):
    table = InflationTable({(1995, 2022): factor})
    assert adjust_for_inflation(cents, 1995, 2022, table) == expected


def test_half_cent_rounds_away_from_zero_exactly():
    exact = Fraction(533) * Fraction(3, 2)
    assert exact == Fraction(1599, 2)
    assert round_half_away(exact) == 800
    assert round_half_away(Fraction(-1599, 2)) == -800
    assert round_half_away(Fraction(1597, 2)) == 799


@given(st.integers(min_value=1, max_value=10**7), st.integers(1900, 2030))
def test_identity_factor_is_identity(cents, year):
    assert adjust_for_inflation(cents, year, year, InflationTable({})) == cents


def _oracle_percentile(values, p):
    # Sort-based: position h = (n-1)p, interpolate between floor and ceil order statistics.
    s = sorted(values)
    h = (len(s) - 1) * Fraction(p)
    lo, hi = int(h), min(int(h) + 1, len(s) - 1)
    return s[lo] + (h - lo) * (s[hi] - s[lo])


def test_quartiles_constant():
    assert quartiles([100, 100, 100, 100]) == (100, 100)


def test_quartiles_five_values_against_oracle():
    vals = [100, 200, 300, 400, 500]
    q1 = _oracle_percentile(vals, "0.25")
    q3 = _oracle_percentile(vals, "0.75")
    assert (q1, q3) == (200, 400)
    assert quartiles(vals) == (200, 400)


def test_quartiles_rounding_to_ten_cents():
    # Oracle: positions 0.75 and 2.25 -> 533 + .75*(547-533) = 543.5 -> 540; 601+.25*(700-601)=625.75 -> 630
    vals = [533, 547, 601, 700]
    assert _oracle_percentile(vals, "0.25") == Fraction(1087, 2)
    assert quartiles(vals) == (540, 630)


def test_quartiles_empty():
    with pytest.raises(DomainError):
        quartiles([])


@given(st.lists(st.integers(1, 100_000), min_size=1, max_size=60), st.randoms())
def test_quartiles_permutation_invariant_and_match_numpy(values, rnd):
    shuffled = list(values)
    rnd.shuffle(shuffled)
    assert quartiles(shuffled) == quartiles(values)
    q1, q3 = np.percentile(values, [25, 75], method="linear")
    got1, got3 = quartiles(values, round_to_cents=1)
    assert abs(got1 - q1) <= 0.5 + 1e-9
    assert abs(got3 - q3) <= 0.5 + 1e-9


def test_derive_bounds_uses_adjusted_values():
    history = load_endowment_history(
        io.StringIO(HEADER + "a,2000,4.00,3\nb,2000,8.00,3\nc,2010,10.00,3\nd,2010,12.00,3\n")
    )
    table = InflationTable({(2000, 2022): Fraction(3, 2), (2010, 2022): Fraction(1)})
    # adjusted: 600, 1200, 1000, 1200 -> sorted 600,1000,1200,1200 -> q1 = 900, q3 = 1200
    assert derive_bounds(history, table, 2022) == (900, 1200)


def test_grid_default_shape():
    grid = default_grid()
    assert len(grid) == 110
    assert grid.values_cents[0] == 530
    assert grid.values_cents[-1] == 1620
    assert all(b - a == 10 for a, b in zip(grid.values_cents, grid.values_cents[1:]))


def test_grid_degenerate_span():
    assert build_grid(530, 530, 10).values_cents == (530,)


@pytest.mark.parametrize("q1, q3, step", [(530, 1625, 10), (600, 500, 10), (530, 1620, 0)])
def test_grid_rejects_bad_bounds(q1, q3, step):
    with pytest.raises(DomainError):
        build_grid(q1, q3, step)


@given(st.integers(1, 5000), st.integers(0, 300), st.integers(1, 50))
def test_grid_length_and_membership(q1, k, step):
    grid = build_grid(q1, q1 + k * step, step)
    assert len(grid) == k + 1
    for v in grid:
        assert q1 <= v <= grid.q3_cents
        assert (v - q1) % step == 0


@pytest.mark.parametrize("cents, tokens", [(0, 0), (530, 265_000), (1620, 810_000)])
def test_cents_to_tokens_paper_rate(cents, tokens):
    # Oracle: dollars / 0.02 * 1000, in exact rationals.
    assert Fraction(cents, 100) / Fraction(2, 100) * 1000 == tokens
    assert cents_to_tokens(cents, DEFAULT_RATE) == tokens


def test_cents_to_tokens_exact_over_grid():
    for cents in default_grid():
        assert cents_to_tokens(cents) == cents * 500


@given(st.integers(0, 10**6), st.integers(0, 10**6), st.sampled_from(["0.02", "0.03", "0.0004", "1.7"]))
def test_cents_to_tokens_monotone(a, b, rate):
    r = TokenRate.parse(rate)
    lo, hi = sorted((a, b))
    assert cents_to_tokens(lo, r) <= cents_to_tokens(hi, r)


def test_cents_to_tokens_negative():
    with pytest.raises(DomainError):
        cents_to_tokens(-1)


def test_token_rate_must_be_positive():
    with pytest.raises(DomainError):
        TokenRate.parse("0")
