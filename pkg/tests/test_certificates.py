import numpy as np
import pytest

from isocurv import sphere
from isocurv.certificates import alignment_gap, converse_gap, kink_certificate
from isocurv.curvature import Kink, Power, Quartic, radius_for_slope
from isocurv.errors import PreconditionError, ShapeError
from isocurv.linalg import random_orthogonal, random_with_spectrum
from isocurv.solver import ModelProblem, solve

C_GRID = np.geomspace(1e-2, 1e2, 100)


def test_alignment_examples(rng):
    G = rng.standard_normal((3, 2))
    assert abs(alignment_gap(G, 2 * G)) <= 1e-12
    gap = alignment_gap(np.diag([2.0, 1.0]), np.array([[0.0, 1.0], [1.0, 0.0]]))
    assert gap == pytest.approx(3.0)
    with pytest.raises(ShapeError):
        alignment_gap(G, G.T)


def test_alignment_nonnegative_on_random_pairs(rng):
    for _ in range(100):
        assert alignment_gap(rng.standard_normal((3, 4)), rng.standard_normal((3, 4))) >= -1e-10


def test_solver_output_is_aligned(rng):
    for _ in range(50):
        m, n = rng.integers(1, 7, 2)
        G = rng.standard_normal((m, n))
        assert alignment_gap(G, solve(ModelProblem(G, Quartic(1.0))).q_star) <= 1e-8


def test_constant_spectrum_constant_multiplier():
    n, c = 3, 2.0
    cert = kink_certificate(np.full(n, c), (1.0, 10.0), sphere.SphereSampler(n, 50_000))
    assert cert.feasible
    # The least-squares solve also fits sampling noise, so eta is n*c only to
    # within a few percent per sample.
    assert cert.eta.mean() == pytest.approx(n * c, rel=1e-3)
    np.testing.assert_allclose(cert.eta, n * c, rtol=5e-2)


def test_no_kink_no_certificate():
    cert = kink_certificate(np.array([2.0, 1.0]), (1.0, 1.0), sphere.SphereSampler(2, 50_000))
    assert not cert.feasible
    cert = kink_certificate(np.array([0.5, 0.5]), (1.0, 1.0), sphere.SphereSampler(2, 50_000))
    assert cert.feasible


def test_wide_interval_feasible():
    sampler = sphere.SphereSampler(3, 200_000)
    cert = kink_certificate(np.array([3.0, 2.0, 1.0]), Kink(0.0, 50.0, 1.0), sampler)
    assert cert.feasible and cert.moment_residual <= 0.02
    assert np.all((cert.eta >= 0.0) & (cert.eta <= 50.0))


def test_feasibility_monotone_in_interval():
    sampler = sphere.SphereSampler(2, 50_000)
    sigma = np.array([2.0, 1.0])
    nested = [(2.0, 4.0), (1.0, 5.0), (0.5, 8.0), (0.0, 20.0)]
    feasible = [kink_certificate(sigma, ab, sampler, threshold=0.05).feasible for ab in nested]
    first = feasible.index(True)
    assert all(feasible[first:])


def test_certificate_preconditions():
    sampler = sphere.SphereSampler(3, 1000)
    with pytest.raises(PreconditionError):
        kink_certificate(np.array([1.0, 1.0]), (0.0, 1.0), sampler)
    with pytest.raises(PreconditionError):
        kink_certificate(np.array([1.0, 0.0, 1.0]), (0.0, 1.0), sampler)


def test_converse_gap_examples(rng):
    H = Quartic(1.0)
    assert converse_gap(np.diag([2.0, 1.0]), H, C_GRID) >= 0.25 - 1e-12
    O = random_orthogonal(3, rng)
    c = radius_for_slope(H, 3 * 1.0)
    assert converse_gap(O, H, np.append(C_GRID, c)) <= 1e-8


def test_converse_gap_scale_invariant(rng):
    H = Power(1.0, 1.0)  # H'(c) = 3c^2, so scaling G by t rescales c by sqrt(t)
    G = random_with_spectrum(4, 3, np.array([2.0, 1.2, 0.7]), rng)
    t = 9.0
    a = converse_gap(G, H, C_GRID)
    b = converse_gap(t * G, H, C_GRID * np.sqrt(t))
    assert a == pytest.approx(b, rel=1e-12)


def test_converse_gap_preconditions(rng):
    with pytest.raises(PreconditionError):
        converse_gap(rng.standard_normal((2, 3)), Quartic(1.0), C_GRID)
    with pytest.raises(PreconditionError):
        converse_gap(np.diag([1.0, 0.0]), Quartic(1.0), C_GRID)
    with pytest.raises(PreconditionError):
        converse_gap(np.eye(2), Kink(0.0, 1.0, 1.0), np.array([1.0]))
