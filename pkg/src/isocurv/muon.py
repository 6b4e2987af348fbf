"""Muon-style update directions and a one-step comparison harness."""

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize_scalar

from . import sphere
from .curvature import Quadratic, Quartic
from .errors import DivergenceError, PreconditionError, RankDeficientError
from .linalg import as_matrix, msgn_exact, svd_compact
from .solver import ModelProblem, solve

# Tuned quintic from the Muon reference code: fast growth of small singular
# values, but its fixed band is roughly [0.7, 1.2] rather than {1}.
MUON_TRIPLE = (3.4445, -4.7750, 2.0315)
# (15x - 10x^3 + 3x^5) / 8: flat to third order at x = 1, so it polishes the
# band left by the Muon triple down to machine precision.
POLISH_TRIPLE = (1.875, -1.25, 0.375)
DEFAULT_SCHEDULE = (MUON_TRIPLE,) * 4 + (POLISH_TRIPLE,) * 4

NS_DIVERGENCE = 1e6


@dataclass(frozen=True)
class NsConfig:
    """Newton-Schulz settings.

    ``coefficients`` is either one ``(a, b, c)`` triple used at every step or
    a per-iteration schedule whose last triple repeats if it runs short.
    """

    iterations: int = 8
    coefficients: tuple = DEFAULT_SCHEDULE
    normalization: str = "frobenius"

    def __post_init__(self):
        if self.iterations < 1:
            raise PreconditionError("iterations must be >= 1")
        if self.normalization not in ("frobenius", "spectral-estimate"):
            raise PreconditionError(f"unknown normalization {self.normalization!r}")
        coeffs = tuple(self.coefficients)
        if len(coeffs) == 3 and all(np.isscalar(v) for v in coeffs):
            coeffs = (tuple(float(v) for v in coeffs),)
        else:
            coeffs = tuple(tuple(float(v) for v in t) for t in coeffs)
            if not coeffs or any(len(t) != 3 for t in coeffs):
                raise PreconditionError("coefficients must be (a, b, c) triples")
        object.__setattr__(self, "coefficients", coeffs)

    def schedule(self):
        c = self.coefficients
        return [c[min(i, len(c) - 1)] for i in range(self.iterations)]


def _spectral_estimate(G, iters=30):
    v = np.ones(G.shape[1]) + np.linspace(0.0, 0.1, G.shape[1])
    v /= np.linalg.norm(v)
    est = 0.0
    for _ in range(iters):
        w = G.T @ (G @ v)
        nw = np.linalg.norm(w)
        if nw == 0:
            break
        v = w / nw
        est = np.sqrt(nw)
    # Power iteration underestimates; pad so the scaled spectrum stays below ~1.
    return 1.05 * est if est > 0 else np.linalg.norm(G)


def msgn_newton_schulz(G, cfg=None):
    """Approximate ``msgn(G)`` by the odd quintic iteration
    ``X <- a X + b (X X^T) X + c (X X^T)^2 X`` from a normalized start."""
    cfg = cfg or NsConfig()
    G = as_matrix(G, "G")
    norm = np.linalg.norm(G)
    if norm == 0:
        raise PreconditionError("Newton-Schulz needs a nonzero matrix")
    if cfg.normalization == "spectral-estimate":
        norm = _spectral_estimate(G)
    tall = G.shape[0] > G.shape[1]
    X = (G.T if tall else G) / norm
    for a, b, c in cfg.schedule():
        A = X @ X.T
        X = a * X + (b * A + c * A @ A) @ X
        if not np.all(np.isfinite(X)) or np.linalg.norm(X) > NS_DIVERGENCE:
            raise DivergenceError("Newton-Schulz iterate norm exceeded 1e6")
    return X.T if tall else X


def ns_scalar_map(x, cfg=None):
    """The polynomial the iteration applies to each normalized singular value."""
    cfg = cfg or NsConfig()
    x = np.asarray(x, dtype=float)
    for a, b, c in cfg.schedule():
        x2 = x * x
        x = x * (a + b * x2 + c * x2 * x2)
    return x


def order_inversions(sigma_in, sigma_out, tol=1e-12):
    """Number of pairs whose order flips: ``in_i > in_j`` but ``out_i < out_j - tol``."""
    a = np.asarray(sigma_in, dtype=float)
    b = np.asarray(sigma_out, dtype=float)
    gt = a[:, None] > a[None, :]
    flipped = b[:, None] < b[None, :] - tol
    return int(np.sum(gt & flipped))


class ModelLoss:
    """Loss whose one-step change is exactly the isotropic curvature model.

    ``decrease(Q) = Tr(Q G^T) - E H(|Q z|)`` is the realized drop of
    ``f(W) -> f(W - Q)``. Quadratic and quartic expectations use matrix closed
    forms (no SVD); other curvatures average ``H(|Q z_s|)`` over the sampler.
    """

    def __init__(self, G, curvature, sampler=None):
        self.G = as_matrix(G, "G")
        self.curvature = curvature
        self.n = self.G.shape[1]
        self.sampler = sampler or sphere.SphereSampler(self.n)

    def curvature_term(self, Q):
        H, n = self.curvature, self.n
        if isinstance(H, Quartic):
            f2 = np.sum(Q * Q)
            gram = Q.T @ Q
            return H.c / (n * (n + 2)) * (f2 * f2 + 2.0 * np.sum(gram * gram))
        if isinstance(H, Quadratic):
            return H.c * np.sum(Q * Q) / n
        r = np.linalg.norm(self.sampler.draw() @ Q.T, axis=1)
        return float(H.value(r).mean())

    def decrease(self, Q):
        return float(np.sum(Q * self.G) - self.curvature_term(Q))

    def predicted_decrease(self, Q):
        """Same quantity computed from singular values (an independent route)."""
        U, sigma, V = svd_compact(self.G)
        s_q = svd_compact(Q).sigma
        H, n = self.curvature, self.n
        if isinstance(H, Quartic):
            e = sphere.quartic_expectation(s_q, n, H.c)
        elif isinstance(H, Quadratic):
            e = sphere.quadratic_expectation(s_q, n, H.c)
        else:
            e = sphere.mc_expectation(s_q, H, self.sampler)[0]
        return float(np.sum(Q * self.G) - e)


def default_step_grid(points=25, lo=1e-4, hi=1e1):
    return np.geomspace(lo, hi, points)


@dataclass
class RuleResult:
    name: str
    direction: np.ndarray
    gammas: np.ndarray
    decreases: np.ndarray
    best_gamma: float
    best_decrease: float
    grid_best_decrease: float
    predicted_decrease: float
    notes: dict = field(default_factory=dict)


@dataclass
class ComparisonResult:
    rules: dict

    def best(self, name):
        return self.rules[name].best_decrease

    def summary(self):
        return {
            name: {
                "best_gamma": r.best_gamma,
                "best_decrease": r.best_decrease,
                "grid_best_decrease": r.grid_best_decrease,
                "predicted_decrease": r.predicted_decrease,
                **r.notes,
            }
            for name, r in self.rules.items()
        }

    def rows(self):
        for name, r in self.rules.items():
            for g, d in zip(r.gammas, r.decreases):
                yield name, float(g), float(d)


def _scan(loss, name, D, grid, refine, extra_gammas=()):
    gammas = np.asarray(grid, dtype=float)
    decs = np.array([loss.decrease(g * D) for g in gammas])
    i = int(np.argmax(decs))
    best_g, best_d = float(gammas[i]), float(decs[i])
    grid_best = best_d
    for g in extra_gammas:
        d = loss.decrease(g * D)
        if d > best_d:
            best_g, best_d = float(g), d
    if refine:
        lo = np.log(gammas[max(i - 1, 0)])
        hi = np.log(gammas[min(i + 1, gammas.size - 1)])
        if hi > lo:
            res = minimize_scalar(
                lambda t: -loss.decrease(np.exp(t) * D),
                bounds=(lo, hi), method="bounded", options={"xatol": 1e-12},
            )
            if -res.fun > best_d:
                best_g, best_d = float(np.exp(res.x)), float(-res.fun)
    return RuleResult(
        name, D, gammas, decs, best_g, best_d, grid_best, loss.predicted_decrease(best_g * D)
    )


def compare_one_step(G, loss, grid=None, ns_config=None, refine=True, solution=None):
    """Best one-step decrease of each update rule on ``loss``.

    Rules are the raw gradient, the exact polar factor, its Newton-Schulz
    approximation and the model optimum ``Q*``. Each direction is scanned
    over the same step grid; ``refine`` polishes the best grid step with a
    bounded scalar search. ``Q*`` is also evaluated at step 1, since it
    already carries its own scale.
    """
    G = as_matrix(G, "G")
    grid = default_step_grid() if grid is None else np.asarray(grid, dtype=float)
    if solution is None:
        solution = solve(ModelProblem(G, loss.curvature, loss.sampler))
    rules = {"raw": _scan(loss, "raw", G, grid, refine)}
    try:
        rules["msgn-exact"] = _scan(loss, "msgn-exact", msgn_exact(G), grid, refine)
    except RankDeficientError:
        pass
    ns_dir = msgn_newton_schulz(G, ns_config)
    ns = _scan(loss, "msgn-ns", ns_dir, grid, refine)
    sigma = svd_compact(G).sigma
    ns.notes["order_inversions"] = order_inversions(sigma, np.sort(svd_compact(ns_dir).sigma)[::-1])
    rules["msgn-ns"] = ns
    opt = _scan(loss, "model-optimal", solution.q_star, grid, refine, extra_gammas=(1.0,))
    opt.notes["model_objective"] = solution.objective
    opt.notes["path"] = solution.path
    rules["model-optimal"] = opt
    return ComparisonResult(rules)
