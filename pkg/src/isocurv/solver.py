"""Solve the isotropic curvature model ``min_Q -Tr(Q G^T) + E H(|Q z|)``.

The matrix program reduces to one over singular values: the optimum shares
the singular vectors of ``G``, so only ``sigma_tilde >= 0`` is searched and
``Q* = U diag(sigma*) V^T`` is rebuilt afterwards. Each curvature variant
has its own path:

* quadratic: closed form ``sigma* = n sigma / (2c)``
* quartic: damped fixed point over the coupled cubic system
* power / tabulated: projected gradient on the sampled objective
* kink: the orthogonal candidate ``r_tilde * msgn(G)``, accepted when a
  first-order certificate is feasible
"""

from dataclasses import dataclass, field
import logging

import numpy as np

from . import sphere
from .certificates import KinkCertificate, kink_certificate
from .curvature import Kink, Power, Quadratic, Quartic, Tabulated, assumption1_holds
from .errors import ConvergenceError, DivergenceError, PreconditionError
from .linalg import as_matrix, compose, svd_compact

log = logging.getLogger(__name__)

DIVERGENCE_LIMIT = 1e8
ARMIJO = 1e-4
QUARTIC_MAX_ITER = 10_000
GENERIC_MAX_ITER = 20_000

PATH_QUADRATIC = "quadratic-closed-form"
PATH_QUARTIC = "quartic-fixed-point"
PATH_GENERIC = "generic-projected-gradient"
PATH_KINK = "kink-parametric"


@dataclass
class ModelProblem:
    gradient: np.ndarray
    curvature: object
    sampler: sphere.SphereSampler | None = None
    # Run the generic path even if H(sqrt x) fails the convexity check.
    acknowledge_nonhomogenizing: bool = False
    # Stopping threshold for the sampled solver; None keeps its default.
    tol: float | None = None

    def __post_init__(self):
        self.gradient = as_matrix(self.gradient, "gradient")
        n = self.gradient.shape[1]
        if self.sampler is None:
            self.sampler = sphere.SphereSampler(n)
        elif self.sampler.ambient_dim != n:
            raise PreconditionError(
                f"sampler dimension {self.sampler.ambient_dim} != gradient columns {n}"
            )


@dataclass
class SpectrumSolution:
    sigma: np.ndarray
    sigma_star: np.ndarray
    objective: float
    stationarity_residual: float
    residual_bound: float
    iterations: int
    path: str
    q_star: np.ndarray | None = None
    covariance: np.ndarray | None = None
    certificate: KinkCertificate | None = None
    extra: dict = field(default_factory=dict)

    def sigma_star_stderr(self):
        if self.covariance is None:
            return np.zeros_like(self.sigma_star)
        return np.sqrt(np.clip(np.diag(self.covariance), 0.0, None))


def _projected_gradient(x, g):
    return x - np.maximum(x - g, 0.0)


# -- quadratic ---------------------------------------------------------------

def solve_quadratic(sigma, n, c):
    sigma = np.asarray(sigma, dtype=float)
    star = n * sigma / (2.0 * c)
    grad = -sigma + 2.0 * c * star / n
    obj = float(-sigma @ star + sphere.quadratic_expectation(star, n, c))
    res = float(np.max(np.abs(_projected_gradient(star, grad)), initial=0.0))
    return SpectrumSolution(
        sigma, star, obj, res, 1e-6 * (1.0 + np.max(sigma, initial=0.0)), 0, PATH_QUADRATIC
    )


# -- quartic -----------------------------------------------------------------

def cubic_roots(b, D, max_iter=100):
    """Nonnegative roots of ``t^3 + D t = b`` for ``b >= 0``, ``D >= 0`` (Newton)."""
    b = np.asarray(b, dtype=float)
    t = np.maximum(b, 1.0) ** (1.0 / 3.0)
    t = np.where(b > 0, t, 0.0)
    for _ in range(max_iter):
        f = t**3 + D * t - b
        fp = 3.0 * t * t + D
        step = np.where(fp > 0, f / np.where(fp > 0, fp, 1.0), 0.0)
        t_new = np.maximum(t - step, 0.0)
        done = np.all(np.abs(t_new - t) <= 4 * np.finfo(float).eps * np.maximum(t_new, 1e-300))
        t = t_new
        if done:
            break
    return t


def quartic_residual(sigma_star, sigma, n, c):
    """Max violation of ``s*^3 + D s* - n(n+2) s / (8c) = 0`` with ``D = |s*|^2 / 2``."""
    s = np.asarray(sigma_star, dtype=float)
    b = n * (n + 2) * np.asarray(sigma, dtype=float) / (8.0 * c)
    D = 0.5 * np.dot(s, s)
    return float(np.max(np.abs(s**3 + D * s - b), initial=0.0))


def solve_quartic_fixed_point(sigma, n, c, max_iter=QUARTIC_MAX_ITER, tol=1e-10):
    """Solve the coupled cubic system of the quartic curvature.

    Given ``D`` each equation ``t^3 + D t = n(n+2) sigma_j / (8c)`` has one
    nonnegative root; ``D`` is then relaxed toward ``sum(t^2) / 2`` with
    damping 0.5, halved whenever the correction grows.

    Returns
    -------
    sigma_star : ndarray
    D : float
    iterations : int
    """
    sigma = np.asarray(sigma, dtype=float)
    if c <= 0:
        raise PreconditionError("c must be positive")
    if np.any(sigma < 0):
        raise PreconditionError("singular values must be nonnegative")
    b = n * (n + 2) * sigma / (8.0 * c)
    scale = max(1.0, float(np.max(b, initial=0.0)))
    if not np.any(b > 0):
        return np.zeros_like(sigma), 0.0, 0
    D, lam, last = 0.0, 0.5, np.inf
    for it in range(1, max_iter + 1):
        t = cubic_roots(b, D)
        target = 0.5 * np.dot(t, t)
        step = target - D
        if quartic_residual(t, sigma, n, c) <= 1e-13 * scale or step == 0.0:
            return t, float(target), it
        if abs(step) > abs(last):
            lam *= 0.5
        last = step
        D += lam * step
    t = cubic_roots(b, D)
    if quartic_residual(t, sigma, n, c) <= tol * scale:
        return t, float(0.5 * np.dot(t, t)), max_iter
    raise ConvergenceError(f"quartic fixed point did not converge in {max_iter} iterations")


def _solution_from_quartic(sigma, n, c):
    star, D, iters = solve_quartic_fixed_point(sigma, n, c)
    obj = float(-sigma @ star + sphere.quartic_expectation(star, n, c))
    grad = -sigma + sphere.quartic_expectation_grad(star, n, c)
    res = float(np.max(np.abs(_projected_gradient(star, grad)), initial=0.0))
    sol = SpectrumSolution(
        sigma, star, obj, res, 1e-6 * (1.0 + np.max(sigma, initial=0.0)), iters, PATH_QUARTIC
    )
    sol.extra["D"] = D
    sol.extra["cubic_residual"] = quartic_residual(star, sigma, n, c)
    return sol


# -- generic projected gradient ------------------------------------------------

class _ClosedForm:
    stochastic = False

    def __init__(self, sigma, H, n):
        self.sigma, self.H, self.n = sigma, H, n

    def value(self, x):
        if isinstance(self.H, Quartic):
            e = sphere.quartic_expectation(x, self.n, self.H.c)
        else:
            e = sphere.quadratic_expectation(x, self.n, self.H.c)
        return float(-self.sigma @ x + e)

    def grad(self, x):
        if isinstance(self.H, Quartic):
            g = sphere.quartic_expectation_grad(x, self.n, self.H.c)
        else:
            g = 2.0 * self.H.c * x / self.n
        return -self.sigma + g, np.zeros_like(x)


class _Sampled:
    """Sample-average objective over one fixed draw (common random numbers)."""

    stochastic = True

    def __init__(self, sigma, H, sampler):
        self.sigma, self.H = sigma, H
        self.w = sampler.squared_coords(sigma.size)

    def radii(self, x):
        return np.sqrt(self.w @ (x * x))

    def value(self, x):
        return float(-self.sigma @ x + self.H.value(self.radii(x)).mean())

    def grad_samples(self, x):
        r = self.radii(x)
        slope = self.H.slope(r)
        safe = np.where(r > 0, r, 1.0)
        return np.where(r[:, None] > 0, (slope / safe)[:, None] * self.w * x, 0.0)

    def grad(self, x):
        terms = self.grad_samples(x)
        se = terms.std(axis=0, ddof=1) / np.sqrt(terms.shape[0])
        return -self.sigma + terms.mean(axis=0), se


def _ray_start(obj, sigma):
    # Coarse minimization of t -> obj(t * sigma / max sigma) for a starting point.
    direction = sigma / np.max(sigma)
    t, f = 1.0, obj.value(direction)
    while True:
        f2 = obj.value(2.0 * t * direction)
        if f2 >= f:
            break
        t, f = 2.0 * t, f2
        if t > DIVERGENCE_LIMIT:
            raise DivergenceError("objective keeps decreasing along the gradient ray")
    for _ in range(80):
        f2 = obj.value(0.5 * t * direction)
        if f2 >= f:
            break
        t, f = 0.5 * t, f2
    return t * direction


def _hessian_fd(obj, x, free):
    idx = np.flatnonzero(free)
    Hm = np.zeros((idx.size, idx.size))
    for a, i in enumerate(idx):
        h = 1e-5 * max(x[i], 1e-3)
        xp, xm = x.copy(), x.copy()
        xp[i] += h
        xm[i] = max(x[i] - h, 0.0)
        Hm[:, a] = (obj.grad(xp)[0][idx] - obj.grad(xm)[0][idx]) / (xp[i] - xm[i])
    return 0.5 * (Hm + Hm.T), idx


def _mc_covariance(obj, x):
    # Delta method: Cov(x*) ~ H^{-1} Cov(mean gradient) H^{-1} on the free set.
    k = x.size
    cov = np.zeros((k, k))
    free = x > 0
    if not np.any(free):
        return cov
    Hm, idx = _hessian_fd(obj, x, free)
    terms = obj.grad_samples(x)[:, idx]
    gcov = np.cov(terms, rowvar=False).reshape(idx.size, idx.size) / terms.shape[0]
    try:
        Hinv = np.linalg.inv(Hm)
    except np.linalg.LinAlgError:
        Hinv = np.linalg.pinv(Hm)
    cov[np.ix_(idx, idx)] = Hinv @ gcov @ Hinv.T
    return cov


def _default_expectation(H):
    return "closed-form" if isinstance(H, (Quadratic, Quartic)) else "mc"


def solve_generic(
    sigma,
    H,
    sampler,
    *,
    expectation="auto",
    tol=None,
    max_iter=GENERIC_MAX_ITER,
    acknowledge_nonhomogenizing=False,
    with_covariance=True,
):
    """Projected gradient descent on ``-sigma . s + E H(|Q z|)`` over ``s >= 0``.

    Parameters
    ----------
    sigma : array_like
        Singular values of the gradient.
    H : Curvature
    sampler : SphereSampler
        Fixes ``n`` and, on the Monte Carlo path, the common random numbers.
    expectation : {"auto", "closed-form", "mc"}
        ``"auto"`` uses the closed form for quadratic and quartic curvature.
    tol : float or "stderr", optional
        Projected-gradient stopping threshold. The default solves the sampled
        objective to ``1e-9 (1 + max sigma)``; ``"stderr"`` stops at
        ``max(1e-6, 3 * gradient standard error)``, which is what the
        nonsmooth fallback uses.
    acknowledge_nonhomogenizing : bool
        Run even when ``H`` fails the ``H(sqrt(x))`` convexity check.
    """
    sigma = np.asarray(sigma, dtype=float)
    n = sampler.ambient_dim
    if np.any(sigma < 0):
        raise PreconditionError("singular values must be nonnegative")
    if sigma.size > n:
        raise PreconditionError("more singular values than the ambient dimension")
    if not acknowledge_nonhomogenizing and not _passes_assumption1(H):
        raise PreconditionError(
            f"{H.variant} curvature fails the H(sqrt x) convexity check; "
            "pass acknowledge_nonhomogenizing=True to solve anyway"
        )
    mode = _default_expectation(H) if expectation == "auto" else expectation
    if mode == "closed-form":
        if not isinstance(H, (Quadratic, Quartic)):
            raise PreconditionError(f"no closed-form expectation for {H.variant}")
        obj = _ClosedForm(sigma, H, n)
    elif mode == "mc":
        obj = _Sampled(sigma, H, sampler)
    else:
        raise PreconditionError(f"unknown expectation mode {expectation!r}")

    scale = 1.0 + float(np.max(sigma, initial=0.0))
    if not np.any(sigma > 0):
        x = np.zeros_like(sigma)
        return SpectrumSolution(sigma, x, 0.0, 0.0, 1e-6 * scale, 0, PATH_GENERIC)

    x = _ray_start(obj, sigma)
    f = obj.value(x)
    g, gse = obj.grad(x)
    step = 1.0 / max(np.max(np.abs(g)), 1e-12) * max(np.max(x), 1e-3)
    noise_stop = tol == "stderr"
    base_tol = 1e-9 * scale if tol is None or noise_stop else float(tol)
    it = 0
    for it in range(1, max_iter + 1):
        res = float(np.max(np.abs(_projected_gradient(x, g))))
        stop = max(base_tol, 1e-6, 3.0 * float(np.max(gse))) if noise_stop else base_tol
        if res <= stop:
            break
        accepted = False
        t = step
        for _ in range(80):
            x_new = np.maximum(x - t * g, 0.0)
            f_new = obj.value(x_new)
            if f_new <= f + ARMIJO * g @ (x_new - x) + 1e-15 * abs(f):
                accepted = True
                break
            t *= 0.5
        if not accepted:
            floor = max(1e-6 * scale, 3.0 * float(np.max(gse)))
            if res <= floor:
                break
            raise ConvergenceError(f"line search failed at projected-gradient norm {res:.3e}")
        if np.max(x_new) > DIVERGENCE_LIMIT:
            raise DivergenceError("singular-value iterates exceeded 1e8; H is not coercive here")
        g_new, gse = obj.grad(x_new)
        s, y = x_new - x, g_new - g
        sy = float(s @ y)
        step = float(s @ s) / sy if sy > 0 else 2.0 * t
        x, f, g = x_new, f_new, g_new
    else:
        raise ConvergenceError(f"generic solver hit the {max_iter}-iteration cap")

    res = float(np.max(np.abs(_projected_gradient(x, g))))
    bound = max(1e-6 * scale, 3.0 * float(np.max(gse)))
    sol = SpectrumSolution(sigma, x, f, res, bound, it, PATH_GENERIC)
    if obj.stochastic:
        sol.extra["gradient_stderr"] = gse.tolist()
        if with_covariance:
            sol.covariance = _mc_covariance(obj, x)
    return sol


_ASSUMPTION_GRID = np.geomspace(1e-3, 1e3, 61)


def _passes_assumption1(H):
    if isinstance(H, Tabulated):
        grid = np.concatenate([H.knots[1:], [2.0 * H.knots[-1]]])
        return assumption1_holds(H, grid)
    return assumption1_holds(H, _ASSUMPTION_GRID)


# -- kink ----------------------------------------------------------------------

def solve_kink(sigma, spec, sampler, certificate_threshold=None):
    """Orthogonalized candidate ``sigma* = (r_tilde, ..., r_tilde)`` under kink curvature.

    The candidate is returned when ``kink_certificate`` finds a bounded
    multiplier reproducing ``diag(sigma)``; otherwise the generic solver runs
    on the kinked objective and the result is tagged with the generic path.
    """
    sigma = np.asarray(sigma, dtype=float)
    n = sampler.ambient_dim
    if not isinstance(spec, Kink):
        raise PreconditionError("solve_kink needs a kink curvature")
    if sigma.size != n:
        raise PreconditionError("solve_kink needs m >= n (one singular value per column)")
    if np.any(sigma <= 0):
        raise PreconditionError("solve_kink needs a full-rank gradient")
    cert = kink_certificate(sigma, spec, sampler, threshold=certificate_threshold)
    if cert.feasible:
        star = np.full(n, spec.r_tilde)
        obj = float(-spec.r_tilde * sigma.sum() + spec.value(spec.r_tilde))
        sol = SpectrumSolution(
            sigma, star, obj, cert.moment_residual, cert.threshold, cert.iterations, PATH_KINK,
            certificate=cert,
        )
        return sol
    log.info("kink certificate infeasible (residual %.3e); falling back", cert.moment_residual)
    try:
        sol = solve_generic(
            sigma, spec, sampler, expectation="mc", tol="stderr",
            acknowledge_nonhomogenizing=True, with_covariance=False,
        )
    except (ConvergenceError, DivergenceError) as exc:
        raise type(exc)(f"kink certificate infeasible and fallback failed: {exc}") from exc
    sol.certificate = cert
    return sol


# -- dispatch ------------------------------------------------------------------

def solve(problem):
    """Solve a ``ModelProblem`` and rebuild ``Q*`` in the SVD basis of ``G``."""
    G = problem.gradient
    m, n = G.shape
    H = problem.curvature
    U, sigma, V = svd_compact(G)
    if not np.any(G):
        path = {Quadratic: PATH_QUADRATIC, Quartic: PATH_QUARTIC, Kink: PATH_KINK}.get(
            type(H), PATH_GENERIC
        )
        zero = np.zeros_like(sigma)
        sol = SpectrumSolution(sigma, zero, 0.0, 0.0, 1e-6, 0, path)
    elif isinstance(H, Quadratic):
        sol = solve_quadratic(sigma, n, H.c)
    elif isinstance(H, Quartic):
        sol = _solution_from_quartic(sigma, n, H.c)
    elif isinstance(H, Kink):
        if m < n:
            raise PreconditionError("kink curvature is only supported for m >= n")
        sol = solve_kink(sigma, H, problem.sampler)
    elif isinstance(H, (Power, Tabulated)):
        sol = solve_generic(
            sigma, H, problem.sampler,
            tol=problem.tol,
            acknowledge_nonhomogenizing=problem.acknowledge_nonhomogenizing,
        )
    else:
        raise PreconditionError(f"unsupported curvature {H!r}")
    sol.q_star = compose(U, sol.sigma_star, V)
    return sol


# -- homogenization --------------------------------------------------------------

def _ratio(a, b):
    hi, lo = max(a, b), min(a, b)
    if hi == 0.0:
        return 1.0
    if lo == 0.0:
        return np.inf
    return hi / lo


@dataclass
class PairCheck:
    i: int
    j: int
    lhs: float
    rhs: float
    slack: float
    passed: bool

    @property
    def margin(self):
        if np.isinf(self.rhs):
            return np.inf if self.passed else -np.inf
        return self.rhs + self.slack - self.lhs


@dataclass
class HomogenizationReport:
    ratio_pairs: list
    order_pairs: list

    @property
    def ratio_passed(self):
        return all(p.passed for p in self.ratio_pairs)

    @property
    def order_passed(self):
        return all(p.passed for p in self.order_pairs)

    @property
    def passed(self):
        return self.ratio_passed and self.order_passed

    @property
    def worst_margin(self):
        margins = [p.margin for p in self.ratio_pairs]
        return min(margins) if margins else np.inf

    @property
    def worst_order_margin(self):
        margins = [p.margin for p in self.order_pairs]
        return min(margins) if margins else np.inf

    def to_dict(self):
        return {
            "passed": self.passed,
            "ratio_passed": self.ratio_passed,
            "order_passed": self.order_passed,
            "worst_margin": self.worst_margin,
            "worst_order_margin": self.worst_order_margin,
            "ratio_pairs": [vars(p) for p in self.ratio_pairs],
            "order_pairs": [vars(p) for p in self.order_pairs],
        }


def homogenization_report(sigma, sigma_star, covariance=None, tol=1e-9):
    """Check ordering preservation and pairwise ratio contraction.

    For every pair, ``max/min`` of ``sigma_star`` must not exceed ``max/min``
    of ``sigma`` (with ``0/0 = 1`` and ``x/0 = inf``), and ``sigma_i >=
    sigma_j`` must imply ``sigma*_i >= sigma*_j``. With a Monte Carlo
    ``covariance`` of ``sigma_star`` each comparison gets an extra slack of
    three standard errors.
    """
    s = np.asarray(sigma, dtype=float)
    t = np.asarray(sigma_star, dtype=float)
    if s.shape != t.shape:
        raise PreconditionError("sigma and sigma_star must have equal length")
    C = np.zeros((s.size, s.size)) if covariance is None else np.asarray(covariance, dtype=float)
    ratio_pairs, order_pairs = [], []
    for i in range(s.size):
        for j in range(i + 1, s.size):
            lhs, rhs = _ratio(t[i], t[j]), _ratio(s[i], s[j])
            slack = tol
            if np.isfinite(lhs) and t[i] > 0 and t[j] > 0:
                var_log = C[i, i] / t[i] ** 2 + C[j, j] / t[j] ** 2 - 2 * C[i, j] / (t[i] * t[j])
                slack += 3.0 * lhs * np.sqrt(max(var_log, 0.0))
            passed = bool(np.isinf(rhs) or lhs <= rhs + slack)
            ratio_pairs.append(PairCheck(i, j, float(lhs), float(rhs), float(slack), passed))

            hi, lo = (i, j) if s[i] >= s[j] else (j, i)
            oslack = tol + 3.0 * np.sqrt(max(C[i, i] + C[j, j] - 2 * C[i, j], 0.0))
            ok = t[hi] >= t[lo] - oslack
            if s[i] == s[j]:
                ok = ok and t[lo] >= t[hi] - oslack
            order_pairs.append(PairCheck(hi, lo, float(t[lo]), float(t[hi]), float(oslack), bool(ok)))
    return HomogenizationReport(ratio_pairs, order_pairs)
