"""Cross-module invariant suite behind ``isocurv check``.

Every property draws random instances from one seeded generator, measures
an error against a tolerance and reports ``margin = tol - error`` per
instance; a property passes when its worst margin is nonnegative.
``inject`` names properties whose measured error is inflated by
``INJECTED_ERROR`` so a negative control can be run end to end.
"""

from dataclasses import dataclass
import time

import numpy as np

from . import sphere
from .certificates import alignment_gap, converse_gap, kink_certificate
from .curvature import Kink, Power, Quadratic, Quartic, Tabulated, radius_for_slope
from .linalg import (
    msgn_exact,
    random_orthogonal,
    random_with_spectrum,
    singular_values,
    svd_compact,
    trace_inner,
)
from .muon import msgn_newton_schulz
from .probe import ProbeConfig, QuadraticOracle, fit_exponent, remainders
from .solver import (
    ModelProblem,
    homogenization_report,
    solve,
    solve_generic,
    solve_quadratic,
    solve_quartic_fixed_point,
)

INJECTED_ERROR = 1.0
MC_SAMPLES = 20_000

_REGISTRY = {}


def _property(name):
    def deco(fn):
        _REGISTRY[name] = fn
        return fn
    return deco


def property_names():
    return list(_REGISTRY)


@dataclass
class PropertyResult:
    name: str
    passed: bool
    count: int
    failures: int
    worst_margin: float
    seconds: float

    def to_dict(self):
        return {
            "name": self.name,
            "passed": self.passed,
            "count": self.count,
            "failures": self.failures,
            "worst_margin": self.worst_margin,
        }


def _dims(rng, max_size, square=False):
    n = int(rng.integers(2, max_size + 1))
    m = n if square else int(rng.integers(n, max_size + 2))
    return m, n


def _spectrum(rng, n, lo=0.1, hi=3.0):
    return np.sort(rng.uniform(lo, hi, n))[::-1]


@_property("svd_reconstruction")
def _svd(rng, max_size, count):
    for _ in range(count):
        m, n = _dims(rng, max_size)
        A = rng.standard_normal((m, n)) if rng.random() < 0.5 else rng.standard_normal((n, m))
        U, s, V = svd_compact(A)
        err = max(
            np.linalg.norm(A - (U * s) @ V.T) / np.linalg.norm(A),
            np.abs(U.T @ U - np.eye(U.shape[1])).max(),
            np.abs(V.T @ V - np.eye(V.shape[1])).max(),
        )
        yield err, 1e-10


@_property("polar_idempotence")
def _polar(rng, max_size, count):
    for _ in range(count):
        m, n = _dims(rng, max_size)
        P = msgn_exact(rng.standard_normal((m, n)))
        yield np.abs(msgn_exact(P) - P).max(), 1e-10


@_property("von_neumann_inequality")
def _vn(rng, max_size, count):
    for _ in range(count):
        m, n = _dims(rng, max_size)
        A, B = rng.standard_normal((m, n)), rng.standard_normal((m, n))
        yield trace_inner(A, B) - singular_values(A) @ singular_values(B), 1e-10


@_property("sphere_quartic_moment")
def _moment(rng, max_size, count):
    for k in range(count):
        _, n = _dims(rng, max_size)
        s = rng.uniform(0.1, 3.0, n)
        sampler = sphere.SphereSampler(n, MC_SAMPLES, seed=k)
        mean, se = sphere.mc_expectation(s, Quartic(1.0), sampler)
        yield abs(mean - sphere.quartic_expectation(s, n)), 4.0 * se


@_property("subdifferential_monotone")
def _subdiff(rng, max_size, count):
    grid = np.geomspace(1e-2, 1e2, 41)
    for _ in range(count):
        specs = [
            Quadratic(rng.uniform(0.1, 2)),
            Power(rng.uniform(0.1, 2), rng.uniform(0.0, 1.5)),
            Quartic(rng.uniform(0.1, 2)),
            Kink(0.5, 3.0, rng.uniform(0.1, 10)),
            Tabulated(tuple(np.linspace(0.5, 5, 6)), tuple(np.linspace(0.5, 5, 6) ** 2)),
        ]
        for H in specs:
            lo, hi = H.subdiff(grid)
            bad = max(float(np.max(lo - hi)), float(np.max(hi[:-1] - lo[1:])), 0.0)
            yield bad, 1e-12


@_property("quartic_fixed_point_vs_generic")
def _quartic(rng, max_size, count):
    for _ in range(count):
        _, n = _dims(rng, max_size)
        s = _spectrum(rng, n)
        fp, _, _ = solve_quartic_fixed_point(s, n, 1.0)
        gen = solve_generic(s, Quartic(1.0), sphere.SphereSampler(n), expectation="closed-form")
        yield np.max(np.abs(fp - gen.sigma_star)) / np.max(np.abs(fp)), 1e-3


@_property("quadratic_scale_covariance")
def _quad_scale(rng, max_size, count):
    for _ in range(count):
        _, n = _dims(rng, max_size)
        s = _spectrum(rng, n)
        c = rng.uniform(0.1, 5.0)
        a = solve_quadratic(s, n, c).sigma_star
        b = solve_quadratic(s, n, 2.0 * c).sigma_star
        yield np.max(np.abs(a - 2.0 * b)) / np.max(a), 1e-14


def _solved_instances(rng, max_size, count):
    alphas = (0.2, 0.39, 1.0)
    for k in range(count):
        m, n = _dims(rng, max_size)
        G = random_with_spectrum(m, n, _spectrum(rng, n), rng)
        H = Quartic(1.0) if k % 4 == 0 else Power(1.0, alphas[k % 3])
        sampler = sphere.SphereSampler(n, MC_SAMPLES, seed=k)
        yield G, H, solve(ModelProblem(G, H, sampler))


@_property("ordering_and_homogenization")
def _homog(rng, max_size, count):
    for _, _, sol in _solved_instances(rng, max_size, count):
        rep = homogenization_report(sol.sigma, sol.sigma_star, sol.covariance)
        yield -min(rep.worst_margin, rep.worst_order_margin), 0.0


@_property("objective_nonpositive")
def _objective(rng, max_size, count):
    for _, _, sol in _solved_instances(rng, max_size, count):
        yield sol.objective, 1e-12


@_property("solution_alignment")
def _alignment(rng, max_size, count):
    for G, _, sol in _solved_instances(rng, max_size, count):
        # Sampled paths may swap near-tied singular values within noise; each
        # swap costs at most (stderr gap) x (sigma gap) in alignment.
        slack = 3.0 * float(np.sum(sol.sigma_star_stderr())) * float(sol.sigma[0])
        yield alignment_gap(G, sol.q_star), 1e-8 + slack


@_property("rotational_equivariance")
def _rotation(rng, max_size, count):
    for _ in range(count):
        m, n = _dims(rng, max_size)
        G = random_with_spectrum(m, n, np.linspace(3.0, 0.5, n), rng)
        O1, O2 = random_orthogonal(m, rng), random_orthogonal(n, rng)
        Q = solve(ModelProblem(G, Quartic(1.0))).q_star
        Qr = solve(ModelProblem(O1 @ G @ O2, Quartic(1.0))).q_star
        yield np.abs(Qr - O1 @ Q @ O2).max(), 1e-8


@_property("kink_certificate_wide_interval")
def _kink(rng, max_size, count):
    for k in range(count):
        n = int(rng.integers(2, min(max_size, 4) + 1))
        s = _spectrum(rng, n, 0.5, 3.0)
        sampler = sphere.SphereSampler(n, 50_000, seed=k)
        cert = kink_certificate(s, Kink(0.0, 100.0 * n * s.max(), 1.0), sampler)
        yield cert.moment_residual, cert.threshold


@_property("converse_gap")
def _converse(rng, max_size, count):
    H = Quartic(1.0)
    c_grid = np.geomspace(1e-2, 1e2, 100)
    for _ in range(count):
        m, n = _dims(rng, max_size)
        s = _spectrum(rng, n)
        G = random_with_spectrum(m, n, s, rng)
        lower = (s[0] - s[-1]) / (2.0 * s[0])
        yield max(lower - converse_gap(G, H, c_grid), 0.0), 1e-12
        O = random_orthogonal(n, rng)[:, :n] * 1.7
        c = radius_for_slope(H, n * 1.7)
        yield converse_gap(O, H, np.append(c_grid, c)), 1e-8


@_property("newton_schulz_equivariance")
def _ns(rng, max_size, count):
    for _ in range(count):
        m, n = _dims(rng, max_size)
        G = random_with_spectrum(m, n, np.geomspace(1.0, rng.uniform(1, 100), n), rng)
        O1, O2 = random_orthogonal(m, rng), random_orthogonal(n, rng)
        X = msgn_newton_schulz(G)
        yield np.abs(msgn_newton_schulz(O1 @ G @ O2) - O1 @ X @ O2).max(), 1e-9
        yield np.abs(X - msgn_exact(G)).max(), 1e-3


@_property("probe_quadratic_exactness")
def _probe(rng, max_size, count):
    cfg = ProbeConfig(
        radii=tuple(np.geomspace(0.1, 10, 6)), direction_count=5, input_count=20,
        fit_window=(1.0, 10.0),
    )
    for k in range(count):
        m = int(rng.integers(2, max_size + 1))
        A = rng.standard_normal((m, m))
        oracle = QuadraticOracle(A @ A.T + 0.1 * np.eye(m))
        W = rng.standard_normal((m, m))
        U = rng.standard_normal((cfg.input_count, m))
        R = remainders(oracle, W, U, ProbeConfig(**{**cfg.to_dict(), "seed": k}))
        yield np.max(np.abs(R - R[0]) / np.abs(R[0])), 1e-10


@_property("fit_exponent_power_law")
def _fit(rng, max_size, count):
    radii = np.geomspace(10**-1.5, 10.0, 24)
    for _ in range(count):
        p = rng.uniform(1.5, 5.0)
        slope, _ = fit_exponent(radii, 3.0 * radii**p, (10**0.5, 10.0))
        yield abs(slope - p), 1e-10


def run_checks(seed=0, max_size=8, count=10, inject=(), only=None):
    """Run the property suite and return a JSON-ready report."""
    unknown = set(inject) - set(_REGISTRY)
    if unknown:
        raise ValueError(f"unknown property names {sorted(unknown)}")
    results = []
    names = only or list(_REGISTRY)
    for idx, name in enumerate(names):
        rng = np.random.default_rng([seed, idx])
        bump = INJECTED_ERROR if name in inject else 0.0
        t0 = time.perf_counter()
        margins = [float(tol - (err + bump)) for err, tol in _REGISTRY[name](rng, max_size, count)]
        elapsed = time.perf_counter() - t0
        failures = sum(mg < 0 for mg in margins)
        results.append(PropertyResult(name, failures == 0, len(margins), failures, min(margins), elapsed))
    return {
        "seed": seed,
        "max_size": max_size,
        "instances_per_property": count,
        "injected": sorted(inject),
        "passed": all(r.passed for r in results),
        "properties": [r.to_dict() for r in results],
    }
