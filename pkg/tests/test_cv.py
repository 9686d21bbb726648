import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from types import SimpleNamespace

from sdeapc import ConfigError, DataError, DomainGrid, extract_transitions
from sdeapc.cv import ElpdReport, bernoulli_elpd, compare, comparison_table, cross_validate, \
    gaussian_elpd, heterogeneity_diagnostics, make_folds
from sdeapc.fit import fit_complete, fit_direct
from sdeapc.fit.laplace import FittedModel
from sdeapc.fit.gaussian import scale_knots
from sdeapc.fit.structure import Fixed, LinearStructure
from sdeapc.panel import Diffs, Transitions

from conftest import SMALL, counts_from


def records(age, year):
    return SimpleNamespace(age=np.asarray(age), year=np.asarray(year))


def test_six_records_five_folds():
    plan = make_folds(records([30] * 6, [2005] * 6), n_folds=5, seed=1)
    assert sorted(plan.sizes().tolist()) == [1, 1, 1, 1, 2]


def test_ten_records_five_folds():
    plan = make_folds(records([30] * 10, [2005] * 10), n_folds=5, seed=1)
    assert plan.sizes().tolist() == [2] * 5


def test_leave_year_out_one_year_per_fold():
    yrs = np.repeat(np.arange(2001, 2006), 7)
    plan = make_folds(records(np.full(35, 30), yrs), "leave_year_out", 5, seed=4)
    for idx in plan.folds():
        assert len(np.unique(yrs[idx])) == 1


def test_leave_out_needs_enough_levels():
    with pytest.raises(ConfigError):
        make_folds(records([30, 31], [2001, 2002]), "leave_year_out", 5)
    with pytest.raises(ConfigError):
        make_folds(records([30], [2001]), "by_household", 5)


@settings(max_examples=100, deadline=None)
@given(st.lists(st.integers(1, 40), min_size=1, max_size=12), st.integers(0, 2**31))
def test_strata_balanced(sizes, seed):
    age = np.repeat(np.arange(len(sizes)) + 25, sizes)
    plan = make_folds(records(age, np.full(len(age), 2003)), n_folds=5, seed=seed)
    for a in np.unique(age):
        per = np.bincount(plan.assignment[age == a], minlength=5)
        assert per.max() - per.min() <= 1


def test_bernoulli_half():
    lp = bernoulli_elpd(np.zeros((3, 1)), np.array([0, 0]), np.array([0, 1]))
    np.testing.assert_allclose(lp, np.log(0.5))


def test_gaussian_single_draw_at_mean():
    knots = scale_knots(5)
    structure = LinearStructure([Fixed(("intercept",))])
    # intercept 2, log sigma 0 everywhere (B-splines sum to one)
    m = FittedModel("t", "gaussian", structure, np.r_[2.0, np.zeros(5)], np.eye(6),
                    scale_knots=knots)
    d = Diffs(np.array([30]), np.array([2005]), np.array([60.0]), np.array([2.0]),
              np.array([0]), np.array([0]))
    assert np.isclose(gaussian_elpd(m, d)[0], -0.5 * np.log(2 * np.pi))


def _report(name, v, assign):
    return ElpdReport(name, np.asarray(v, float), np.asarray(assign))


def test_compare_self_and_antisymmetry():
    rng = np.random.default_rng(0)
    a = np.zeros(20, int)
    r1, r2 = _report("a", rng.normal(size=20), a), _report("b", rng.normal(size=20), a)
    d = compare({"a": r1, "a2": _report("a2", r1.pointwise, a)}, "a")
    assert all(x.delta == 0 and x.se == 0 for x in d)
    ab = compare({"a": r1, "b": r2}, "b")[0]
    ba = compare({"a": r1, "b": r2}, "a")[1]
    assert ab.delta == -ba.delta and ab.se == ba.se


def test_compare_rejects_mismatched_folds():
    with pytest.raises(DataError):
        compare({"a": _report("a", [0, 0], [0, 1]), "b": _report("b", [0, 0], [1, 0])})


def test_complete_has_zero_spread():
    c = counts_from(DomainGrid(30, 31, 2001, 2002), [10, 20, 5, 7], [3, 4, 1, 2])
    assert heterogeneity_diagnostics(fit_complete(c))["V_of_E"] == 0.0


def test_two_cell_direct_spread():
    n = 10**7
    c = counts_from(DomainGrid(30, 30, 2001, 2002), [n, n], [n // 5, 4 * n // 5])
    v = heterogeneity_diagnostics(fit_direct(c))["V_of_E"]
    assert abs(v - np.log(4) ** 2) < 1e-4


def test_complete_within_close_to_cv(smooth_small):
    tr = extract_transitions(smooth_small.panel, "exit", SMALL)
    plan = make_folds(tr, n_folds=5, seed=0)
    r = cross_validate(tr, SMALL, ["complete"], plan, 500, seed=0)["complete"]
    assert abs(r.total_within - r.total) < 1e-3 * abs(r.total)


def test_table_self_comparison_zero(smooth_small):
    tr = extract_transitions(smooth_small.panel, "exit", SMALL)
    plan = make_folds(tr, n_folds=5, seed=0)
    reps = cross_validate(tr, SMALL, ["complete"], plan, 200, seed=0)
    t = comparison_table(reps)
    assert t.loc[0, "delta_cv"] == 0 and t.loc[0, "delta_sd"] == 0 and t.loc[0, "delta_within"] == 0


def test_direct_fallback_scores_log_half():
    g = DomainGrid(30, 31, 2001, 2001)
    tr = Transitions("exit", np.array([30, 30, 31, 31]), np.full(4, 2001), np.ones(4, int),
                     np.array([0, 1, 0, 1]), np.arange(4))
    # leaving out one age at a time leaves the held-out cell without training data
    plan = make_folds(tr, "leave_age_out", 2, seed=0)
    rep = cross_validate(tr, g, ["direct"], plan, 50, seed=0, within=False)["direct"]
    assert rep.n_fallback == 4
    np.testing.assert_allclose(rep.pointwise, np.log(0.5))
