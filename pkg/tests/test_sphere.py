import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from isocurv import sphere
from isocurv.curvature import Quadratic, Quartic
from isocurv.errors import PreconditionError


def test_samples_lie_on_the_sphere():
    z = sphere.SphereSampler(5, 10_000, seed=3).draw()
    np.testing.assert_allclose(np.linalg.norm(z, axis=1), 1.0, atol=1e-12)
    assert not z.flags.writeable


def test_stream_is_reproducible_and_thread_independent():
    a = sphere.SphereSampler(4, 70_000, seed=9).draw()
    b = sphere.SphereSampler(4, 70_000, seed=9, threads=3).draw()
    assert np.array_equal(a, b)
    c = sphere.SphereSampler(4, 70_000, seed=10).draw()
    assert not np.array_equal(a, c)


def test_second_moment():
    assert sphere.second_moment(2) == 0.5
    assert sphere.second_moment(1) == 1.0
    z2 = sphere.SphereSampler(10, 1_000_000, seed=1).squared_coords()[:, 0]
    assert abs(z2.mean() - 0.1) <= 3 * z2.std(ddof=1) / np.sqrt(z2.size)
    with pytest.raises(PreconditionError):
        sphere.second_moment(0)


def test_quartic_closed_form_examples():
    assert sphere.quartic_expectation([1.0], 1) == pytest.approx(1.0)
    assert sphere.quartic_expectation([1.0, 1.0], 2) == pytest.approx(1.0)
    assert sphere.quartic_expectation([2.0, 1.0], 2) == pytest.approx(7.375)


def test_quartic_matches_monte_carlo():
    mean, se = sphere.mc_expectation([2.0, 1.0], Quartic(1.0), sphere.SphereSampler(2, 1_000_000))
    assert abs(mean - 7.375) <= 3 * se


def test_quadratic_mc_examples():
    s = sphere.SphereSampler(3, 50_000)
    mean, se = sphere.mc_expectation(np.ones(3), Quadratic(1.0), s)
    assert mean == pytest.approx(1.0, abs=1e-12) and se < 1e-12
    s2 = sphere.SphereSampler(2, 200_000, seed=4)
    mean, se = sphere.mc_expectation([1.5, 0.5], Quadratic(1.0), s2)
    assert abs(mean - (1.5**2 + 0.5**2) / 2) <= 3 * se


def test_weighted_grad_quadratic_is_unbiased():
    s = np.array([1.0, 2.0, 0.5])
    g, se = sphere.mc_weighted_grad(s, Quadratic(1.0), sphere.SphereSampler(4, 200_000), True)
    assert np.all(np.abs(g - 2 * s / 4) <= 3 * se + 1e-15)


def test_weighted_grad_zero_and_quartic_fd():
    sampler = sphere.SphereSampler(2, 100_000)
    np.testing.assert_array_equal(sphere.mc_weighted_grad([0.0, 0.0], Quartic(1.0), sampler), 0.0)
    x, h = np.array([2.0, 1.0]), 1e-5
    fd = [
        (sphere.quartic_expectation(x + h * e, 2) - sphere.quartic_expectation(x - h * e, 2)) / (2 * h)
        for e in np.eye(2)
    ]
    np.testing.assert_allclose(sphere.quartic_expectation_grad(x, 2), fd, atol=1e-3)
    g, se = sphere.mc_weighted_grad(x, Quartic(1.0), sphere.SphereSampler(2, 400_000), True)
    assert np.all(np.abs(g - np.array(fd)) <= 4 * se)


@settings(max_examples=50, deadline=None)
@given(st.integers(1, 6), st.integers(0, 10_000))
def test_closed_form_and_mc_agree(n, seed):
    r = np.random.default_rng(seed)
    k = int(r.integers(1, n + 1))
    s = r.uniform(0, 3, k)
    mean, se = sphere.mc_expectation(s, Quartic(1.0), sphere.SphereSampler(n, 20_000, seed=seed))
    assert abs(mean - sphere.quartic_expectation(s, n)) <= 4 * se + 1e-12


def test_permutation_symmetry_in_closed_form(rng):
    s = rng.uniform(0, 2, 5)
    assert sphere.quartic_expectation(s, 5) == pytest.approx(sphere.quartic_expectation(s[::-1], 5))


def test_monotone_in_each_singular_value(rng):
    s = rng.uniform(0, 2, 4)
    base = sphere.quartic_expectation(s, 6)
    for i in range(4):
        bumped = s.copy()
        bumped[i] += 0.1
        assert sphere.quartic_expectation(bumped, 6) >= base


def test_input_validation():
    with pytest.raises(PreconditionError):
        sphere.quartic_expectation([1.0, 1.0, 1.0], 2)
    with pytest.raises(PreconditionError):
        sphere.quartic_expectation([-1.0], 2)
    with pytest.raises(PreconditionError):
        sphere.SphereSampler(0)
