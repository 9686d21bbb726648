import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from sdeapc import ConfigError, DomainCell, DomainGrid, QuadraticApcCoeffs, apc_reparameterize


def test_two_by_two_enumeration():
    g = DomainGrid(25, 26, 2001, 2002)
    assert [(c.age, c.year) for c in g.cells()] == [(25, 2001), (25, 2002), (26, 2001), (26, 2002)]


def test_single_cell_cohort():
    g = DomainGrid(30, 30, 2005, 2005)
    cells = g.cells()
    assert len(cells) == 1
    assert cells[0].cohort == 1975


def test_default_grid_has_640_cells():
    g = DomainGrid()
    assert g.n_cells == 640
    assert g.shape == (40, 16)


def test_index_matches_enumeration():
    g = DomainGrid(25, 30, 2001, 2004)
    a, t = g.cell_arrays()
    np.testing.assert_array_equal(g.index(a, t), np.arange(g.n_cells))


def test_contains_and_out_of_grid():
    g = DomainGrid(25, 30, 2001, 2004)
    assert g.contains([25, 31, 30], [2001, 2001, 2005]).tolist() == [True, False, False]


def test_reversed_ranges_rejected():
    with pytest.raises(ConfigError):
        DomainGrid(40, 30, 2001, 2002)
    with pytest.raises(ConfigError):
        DomainGrid(25, 30, 2005, 2001)


def test_extend_years():
    g = DomainGrid(25, 30, 2001, 2004).extend_years(3)
    assert g.year_max == 2007 and g.n_cells == 6 * 7


def test_apc_worked_example():
    c = QuadraticApcCoeffs(alpha=0, beta1=1, beta2=0, gamma1=0, gamma2=0, delta1=1, delta2=1)
    r = apc_reparameterize(c)
    assert (r.const, r.age, r.period, r.age2, r.period2, r.age_period) == (0, 0, 1, 1, 1, -2)


def test_apc_zero():
    r = apc_reparameterize(QuadraticApcCoeffs())
    assert (r.const, r.age, r.period, r.age2, r.period2, r.age_period) == (0, 0, 0, 0, 0, 0)


def test_apc_random_points_agree():
    rng = np.random.default_rng(3)
    c = QuadraticApcCoeffs(*rng.normal(size=7))
    A = rng.uniform(25, 64, 100)
    P = rng.uniform(2001, 2016, 100)
    # independent oracle: expand the polynomial with an explicit cohort column
    C = P - A
    v = np.column_stack([np.ones_like(A), A, A**2, P, P**2, C, C**2])
    direct = v @ np.array([c.alpha, c.beta1, c.beta2, c.gamma1, c.gamma2, c.delta1, c.delta2])
    np.testing.assert_allclose(apc_reparameterize(c).evaluate(A, P), direct, rtol=1e-12, atol=1e-9)


finite = st.floats(-10, 10, allow_nan=False)


@settings(max_examples=200, deadline=None)
@given(st.tuples(*[finite] * 7), st.floats(0, 1), st.floats(0, 1))
def test_apc_round_trip_property(coef, a, p):
    c = QuadraticApcCoeffs(*coef)
    assert abs(apc_reparameterize(c).evaluate(a, p) - c.evaluate(a, p)) < 1e-10


def test_domain_cell_is_value_type():
    assert DomainCell(30, 2005) == DomainCell(30, 2005)
