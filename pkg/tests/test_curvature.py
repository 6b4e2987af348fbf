import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from isocurv.curvature import (
    Kink,
    Power,
    Quadratic,
    Quartic,
    Tabulated,
    assumption1_holds,
    from_dict,
    h_subdiff,
    h_value,
    isotonic_nonneg,
    radius_for_slope,
)
from isocurv.errors import CurvatureError, PreconditionError

GRID = np.geomspace(1e-3, 1e3, 61)


def test_values():
    assert h_value(Quadratic(2.0), 3.0) == 18.0
    assert h_value(Power(1.0, 0.39), 1.0) == 1.0
    assert h_value(Kink(0.0, 5.0, 1.0), 2.0) == 5.0


def test_subdifferentials():
    assert h_subdiff(Quartic(1.0), 2.0) == (32.0, 32.0)
    k = Kink(0.1, 10.0, 1.0)
    assert h_subdiff(k, 1.0) == (0.1, 10.0)
    assert h_subdiff(k, 0.5) == (0.1, 0.1)
    assert h_subdiff(k, 2.0) == (10.0, 10.0)
    with pytest.raises(PreconditionError):
        h_subdiff(k, 0.0)


def test_assumption_examples():
    assert assumption1_holds(Quartic(1.0), GRID)
    assert assumption1_holds(Quadratic(1.0), GRID)
    assert not assumption1_holds(Power(1.0, -1.0), np.array([0.5, 1.0, 2.0]))
    assert not assumption1_holds(Kink(0.5, 3.0, 1.0), GRID)


@pytest.mark.parametrize("alpha", [0.01, 0.2, 0.39, 1.0, 3.0])
def test_positive_alpha_passes(alpha):
    assert assumption1_holds(Power(1.0, alpha), GRID)


def test_invalid_specs():
    with pytest.raises(CurvatureError):
        Kink(1.0, 1.0, 1.0)
    with pytest.raises(CurvatureError):
        Kink(2.0, 1.0, 1.0)
    with pytest.raises(CurvatureError):
        Quadratic(0.0)
    with pytest.raises(CurvatureError):
        Power(1.0, -1.5)
    with pytest.raises(CurvatureError):
        Tabulated((1.0, 1.0), (1.0, 2.0))


def test_from_dict_round_trip():
    for H in (Quadratic(2.0), Power(1.5, 0.39), Quartic(0.5), Kink(0.0, 4.0, 2.0),
              Tabulated((1.0, 2.0), (1.0, 4.0))):
        assert from_dict(H.to_dict()) == H


@pytest.mark.parametrize("bad", [
    {"c": 1.0},
    {"variant": "cubic", "c": 1.0},
    {"variant": "quartic"},
    {"variant": "quartic", "c": 1.0, "alpha": 2},
    {"variant": "quartic", "c": "1"},
    {"variant": "kink", "A": 1, "B": 0.5, "r_tilde": 1},
])
def test_from_dict_rejects(bad):
    with pytest.raises(CurvatureError):
        from_dict(bad)


def test_tabulated_projects_to_convex():
    H = Tabulated((1.0, 2.0, 3.0, 4.0), (1.0, 4.0, 5.0, 16.0))
    assert np.all(np.diff(H.slopes) >= 0)
    assert H.projection_distance > 0
    exact = Tabulated((1.0, 2.0, 3.0), (1.0, 4.0, 9.0))
    assert exact.projection_distance == pytest.approx(0.0, abs=1e-12)
    assert h_value(exact, 2.5) == pytest.approx(6.5)
    assert h_value(exact, 4.0) == pytest.approx(14.0)
    assert h_subdiff(exact, 2.0) == (3.0, 5.0)


def test_isotonic_projection():
    np.testing.assert_allclose(isotonic_nonneg([3.0, 1.0, 2.0], [1, 1, 1]), [2.0, 2.0, 2.0])
    np.testing.assert_allclose(isotonic_nonneg([-1.0, 0.5], [1, 1]), [0.0, 0.5])


specs = st.one_of(
    st.builds(Quadratic, st.floats(0.1, 5)),
    st.builds(Power, st.floats(0.1, 5), st.floats(-1, 3)),
    st.builds(Quartic, st.floats(0.1, 5)),
    st.builds(lambda a, d, r: Kink(a, a + d, r), st.floats(0, 5), st.floats(0.1, 5), st.floats(0.1, 5)),
)


@settings(max_examples=100, deadline=None)
@given(specs)
def test_monotone_values_and_subdifferentials(H):
    r = np.geomspace(1e-2, 1e2, 200)
    assert np.all(np.diff(H.value(r)) >= 0)
    lo, hi = H.subdiff(r)
    assert np.all(lo <= hi)
    assert np.all(hi[:-1] <= lo[1:] + 1e-12)
    assert H.value(0.0) >= 0


def test_radius_for_slope():
    H = Quartic(1.0)
    r = radius_for_slope(H, 4.0)
    assert r == pytest.approx(1.0, rel=1e-12)
    assert radius_for_slope(Kink(1.0, 3.0, 2.0), 2.0) == pytest.approx(2.0)
