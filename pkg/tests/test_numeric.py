import pytest
from hypothesis import given, strategies as st

from rehab_extract.errors import NoNumber
from rehab_extract.numeric import (DURATION, REPS, SETS, SETS_REPS, NumericValue,
                                   normalize_numeric)

small = st.integers(min_value=0, max_value=999)


@pytest.mark.parametrize("text,category,expected", [
    ("2 min", DURATION, [(DURATION, 120)]),
    ("30 sec", DURATION, [(DURATION, 30)]),
    ("2x10", SETS_REPS, [(SETS, 2), (REPS, 10)]),
    ("3 X 15", SETS_REPS, [(SETS, 3), (REPS, 15)]),
    ("5'", DURATION, [(DURATION, 300)]),
    ('45"', DURATION, [(DURATION, 45)]),
    ("1 hr 5 min", DURATION, [(DURATION, 3900)]),
    ("45", DURATION, [(DURATION, 45)]),
    ("x10", REPS, [(REPS, 10)]),
    ("2x10", REPS, [(REPS, 10)]),
    ("2x10", SETS, [(SETS, 2)]),
    ("3 sets", SETS, [(SETS, 3)]),
    ("12 reps", REPS, [(REPS, 12)]),
])
def test_examples(text, category, expected):
    assert [(v.category, v.value) for v in normalize_numeric(text, category)] == expected


@pytest.mark.parametrize("text,category", [("abc", DURATION), ("", REPS), ("3 reps", SETS_REPS)])
def test_no_number(text, category):
    with pytest.raises(NoNumber):
        normalize_numeric(text, category)


def test_value_constraints():
    with pytest.raises(ValueError):
        NumericValue(DURATION, -1)
    with pytest.raises(ValueError):
        NumericValue("weight", 3)
    with pytest.raises(ValueError):
        normalize_numeric("3", "weight")


@given(small, small)
def test_nxm_splits(n, m):
    assert normalize_numeric(f"{n}x{m}", SETS_REPS) == [NumericValue(SETS, n), NumericValue(REPS, m)]


@given(small)
def test_minutes_are_sixty_seconds(k):
    for text in (f"{k} min", f"{k} minutes", f"{k}'"):
        assert normalize_numeric(text, DURATION) == [NumericValue(DURATION, 60 * k)]
    for text in (f"{k} sec", f"{k} seconds", f'{k}"'):
        assert normalize_numeric(text, DURATION) == [NumericValue(DURATION, k)]
