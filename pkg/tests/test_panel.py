import numpy as np
import pandas as pd
import pytest
from hypothesis import given, settings, strategies as st

from sdeapc import DataError, DomainGrid, Panel, aggregate, derive_has, extract_diffs, \
    extract_transitions
from sdeapc.panel import IngestReport, read_panel

GRID = DomainGrid(25, 64, 2001, 2016)


def make_panel(rows):
    df = pd.DataFrame(rows, columns=["person_id", "year", "age", "has", "mh"])
    return Panel.from_frame(df)


@pytest.mark.parametrize("income,cost,p40,expected", [
    (50000, 20000, 52000, 1),
    (50000, 10000, 52000, 0),
    (80000, 30000, 52000, 0),
])
def test_thirty_forty_rule(income, cost, p40, expected):
    assert derive_has(income, cost, p40) == expected


def test_missing_income_has_no_status():
    assert derive_has(None, 100.0, 52000) is None
    out = derive_has(np.array([np.nan, 0.0, 50000]), np.array([1.0, 1.0, 20000]), 52000)
    assert np.isnan(out[0]) and np.isnan(out[1]) and out[2] == 1


def test_exit_path_one_one_zero():
    p = make_panel([("a", 2001, 30, 1, 70), ("a", 2002, 31, 1, 70), ("a", 2003, 32, 0, 70)])
    tr = extract_transitions(p, "exit", GRID)
    assert list(zip(tr.year, tr.event)) == [(2002, 0), (2003, 1)]


def test_entry_path_zero_one():
    p = make_panel([("a", 2001, 30, 0, 70), ("a", 2002, 31, 1, 70)])
    entry = extract_transitions(p, "entry", GRID)
    assert len(entry) == 1 and entry.event[0] == 1
    assert len(extract_transitions(p, "exit", GRID)) == 0


def test_gap_gives_no_transition():
    p = make_panel([("a", 2001, 30, 1, 70), ("a", 2003, 32, 0, 70)])
    assert len(extract_transitions(p, "exit", GRID)) == 0
    assert len(extract_diffs(p, GRID)) == 0


def test_counting_in_one_cell():
    rows = []
    for i in range(5):
        rows += [(f"p{i}", 2004, 39, 1, 60), (f"p{i}", 2005, 40, int(i >= 2), 60)]
    c = aggregate(extract_transitions(make_panel(rows), "exit", GRID), GRID)
    i = GRID.index(40, 2005)
    assert c.n.ravel()[i] == 5 and c.k.ravel()[i] == 2
    assert c.total_n == 5


def test_empty_input_counts():
    p = make_panel([])
    c = aggregate(extract_transitions(p, "exit", GRID), GRID)
    assert c.total_n == 0 and c.total_k == 0


def test_diff_record():
    p = make_panel([("a", 2001, 30, 0, 75.0), ("a", 2002, 31, 0, 70.0)])
    d = extract_diffs(p, GRID)
    assert d.dy.tolist() == [-5.0] and d.y_prev.tolist() == [75.0] and d.m.tolist() == [0]


def test_duplicate_person_year_rejected():
    with pytest.raises(DataError):
        make_panel([("a", 2001, 30, 0, 70), ("a", 2001, 30, 1, 70)])


def test_mh_out_of_range_rejected():
    with pytest.raises(DataError):
        make_panel([("a", 2001, 30, 0, 101.0)])


def _brute(rows, direction):
    """Independent dict-based transition counter."""
    by = {(r[0], r[1]): r for r in rows}
    n, k = {}, {}
    start = 1 if direction == "exit" else 0
    for (pid, yr), r in by.items():
        prev = by.get((pid, yr - 1))
        if prev is None or prev[3] != start:
            continue
        if not (25 <= r[2] <= 64 and 2001 <= r[1] <= 2016):
            continue
        key = (r[2], r[1])
        n[key] = n.get(key, 0) + 1
        k[key] = k.get(key, 0) + int(r[3] != start)
    return n, k


def _brute_pairs(rows):
    by = {(r[0], r[1]): r for r in rows}
    return sum(1 for (pid, yr), r in by.items() if (pid, yr - 1) in by
               and 25 <= r[2] <= 64 and 2001 <= r[1] <= 2016)


people = st.lists(st.tuples(st.integers(20, 66), st.integers(2000, 2003),
                            st.lists(st.booleans(), min_size=1, max_size=6),
                            st.lists(st.booleans(), min_size=6, max_size=6)),
                  max_size=25)


@settings(max_examples=60, deadline=None)
@given(people)
def test_counts_match_brute_force(spec):
    rows = []
    for i, (age0, y0, path, present) in enumerate(spec):
        for j, h in enumerate(path):
            if present[j]:
                rows.append((f"p{i}", y0 + j, age0 + j, int(h), 50.0))
    p = make_panel(rows)
    for direction in ("exit", "entry"):
        c = aggregate(extract_transitions(p, direction, GRID), GRID)
        n, k = _brute(rows, direction)
        assert c.total_n == sum(n.values())
        assert c.total_k == sum(k.values())
        for (a, t), v in n.items():
            assert c.n.ravel()[GRID.index(a, t)] == v
    assert len(extract_diffs(p, GRID)) == _brute_pairs(rows)


def test_read_panel_derives_has(tmp_path):
    f = tmp_path / "panel.csv"
    pd.DataFrame({"person_id": ["a", "a", "b"], "year": [2001, 2002, 2001], "age": [30, 31, 40],
                  "income": [50000, 80000, np.nan], "housing_cost": [20000, 30000, 1000],
                  "mh": [70, 72, 80]}).to_csv(f, index=False)
    rep = IngestReport()
    p = read_panel(f, {2001: 52000.0, 2002: 52000.0}, rep)
    assert p.has[0] == 1 and p.has[1] == 0 and np.isnan(p.has[2])
    assert rep.counts["excluded_missing_income_or_cost"] == 1
    with pytest.raises(DataError):
        read_panel(f)
    with pytest.raises(DataError):
        read_panel(tmp_path / "missing.csv")
