from fractions import Fraction

import pytest
from hypothesis import given
from hypothesis import strategies as st

from plantcap.chapman import CbScenario, chapman_bailey, chapman_bailey_table
from plantcap.data import IdCounts, snight_dataset

SEEN, NOT_SEEN = CbScenario.MAYBE_AS_SEEN, CbScenario.MAYBE_AS_NOT_SEEN

# published baseline; the New York "not seen" cell is printed as 1670 but the
# bundled counts give 1870 under every rounding convention
PUBLISHED = {
    "Chicago": (7, 42),
    "New Orleans": (63, 76),
    "Phoenix": (96, 102),
    "New York": (1520, 1670),
    "Los Angeles": (257, 289),
}


def _exact(d: IdCounts, seen: bool) -> Fraction:
    m = d.m_i + d.m_yes + (d.m_mb if seen else 0)
    M = d.m_total
    return Fraction((M + 1) * (d.y + 1), m + 1) - 1 - M


@pytest.mark.parametrize("city", [c for c in PUBLISHED])
def test_published_values(city):
    d = snight_dataset()[city]
    seen, not_seen = PUBLISHED[city]
    assert chapman_bailey(d, SEEN) == seen
    if city == "New York":
        assert chapman_bailey(d, NOT_SEEN) == 1870
        assert abs(_exact(d, False) - 1670) > 150
    else:
        assert chapman_bailey(d, NOT_SEEN) == not_seen


def test_worked_examples():
    no = snight_dataset()["New Orleans"]
    assert no.m_total == 58 and no.m_i + no.m_yes + no.m_mb == 52 and no.y == 109
    assert chapman_bailey(no, "maybe-as-seen") == 63
    assert chapman_bailey(IdCounts(0, 2, 5, 6, 11), NOT_SEEN) == 42


def test_table_shape():
    table = chapman_bailey_table(snight_dataset())
    assert set(table) == set(PUBLISHED)
    assert all(set(v) == {"maybe-as-seen", "maybe-as-not-seen"} for v in table.values())


counts = st.builds(
    lambda mi, my, mm, mn, extra: IdCounts(mi, my, mm, mn, mi + my + extra),
    st.integers(0, 30), st.integers(0, 30), st.integers(1, 30), st.integers(0, 30), st.integers(0, 2000),
)


@given(counts)
def test_seen_never_exceeds_not_seen(d):
    assert chapman_bailey(d, SEEN) <= chapman_bailey(d, NOT_SEEN)


@given(counts)
def test_rounds_exact_value(d):
    for scenario, seen in ((SEEN, True), (NOT_SEEN, False)):
        assert abs(chapman_bailey(d, scenario) - _exact(d, seen)) <= Fraction(1, 2)


def test_unknown_treatment():
    with pytest.raises(ValueError):
        chapman_bailey(snight_dataset()["Chicago"], "maybe-as-maybe")
