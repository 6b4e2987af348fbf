"""Executable optimality certificates for the isotropic curvature model."""

from dataclasses import dataclass

import numpy as np

from .curvature import Kink, h_subdiff
from .errors import PreconditionError, ShapeError
from .linalg import as_matrix, singular_values, trace_inner

CERT_MAX_ITER = 5000


def alignment_gap(G, Q):
    """``sum_i sigma_i(Q) sigma_i(G) - Tr(Q G^T)``.

    Nonnegative by von Neumann's trace inequality; zero exactly when ``Q``
    can be written in the singular bases of ``G``.
    """
    G, Q = as_matrix(G, "G"), as_matrix(Q, "Q")
    if G.shape != Q.shape:
        raise ShapeError(f"shape mismatch {G.shape} vs {Q.shape}")
    return float(singular_values(Q) @ singular_values(G) - trace_inner(Q, G))


@dataclass
class KinkCertificate:
    """Bounded multiplier ``eta_s in [A, B]`` with ``mean(eta z z^T) ~ diag(sigma)/scale``."""

    eta: np.ndarray
    moment_residual: float
    threshold: float
    feasible: bool
    iterations: int
    bounds: tuple

    def to_dict(self):
        eta = self.eta
        return {
            "feasible": self.feasible,
            "moment_residual": self.moment_residual,
            "threshold": self.threshold,
            "iterations": self.iterations,
            "A": self.bounds[0],
            "B": self.bounds[1],
            "sample_count": int(eta.size),
            "eta_min": float(eta.min()),
            "eta_max": float(eta.max()),
            "eta_mean": float(eta.mean()),
        }


def _moment_features(z):
    # Columns: z_i^2 for each i, then sqrt(2) z_i z_j for i < j, so that the
    # Euclidean norm of the feature residual equals the Frobenius norm of the
    # symmetric moment residual.
    n = z.shape[1]
    iu = np.triu_indices(n, 1)
    off = z[:, iu[0]] * z[:, iu[1]] * np.sqrt(2.0)
    return np.hstack([z * z, off]), n


def _initial_eta(z2, target, lo, hi):
    # eta = sum_i w_i z_i^2 matches E[eta z_j^2] = target_j exactly in expectation.
    n = z2.shape[1]
    total = n * target.sum()
    w = 0.5 * (n * (n + 2) * target - total)
    return np.clip(z2 @ w, lo, hi)


def kink_certificate(sigma, spec, sampler, scale=1.0, threshold=None, max_iter=CERT_MAX_ITER):
    """Search for a multiplier certifying that ``r_tilde * msgn(G)`` is stationary.

    Solves the box-constrained least-squares problem
    ``min_{A <= eta <= B} |(1/S) sum_s eta_s z_s z_s^T - diag(sigma)/scale|_F``
    over the sampler's draw by accelerated projected gradient.

    Parameters
    ----------
    sigma : array_like, shape (n,)
        Positive singular values of a gradient with ``m >= n``.
    spec : Kink or (A, B)
        Interval of admissible slopes at the kink. A plain pair may have
        ``A == B``, which models a curvature without a kink.
    sampler : SphereSampler
    scale : float
    threshold : float, optional
        Feasibility cut on the max-abs moment residual; defaults to
        ``3 sqrt(n / S) B``.
    """
    sigma = np.asarray(sigma, dtype=float).ravel()
    lo, hi = (spec.A, spec.B) if isinstance(spec, Kink) else map(float, spec)
    if hi < lo or lo < 0:
        raise PreconditionError("need 0 <= A <= B")
    n, S = sampler.ambient_dim, sampler.sample_count
    if sigma.size != n:
        raise PreconditionError("certificate needs m >= n: one singular value per column")
    if np.any(sigma <= 0):
        raise PreconditionError("certificate needs a full-rank gradient")
    if threshold is None:
        threshold = 3.0 * np.sqrt(n / S) * hi

    z = sampler.draw()
    phi, _ = _moment_features(z)
    target = np.concatenate([sigma / scale, np.zeros(phi.shape[1] - n)])

    def residual_vec(eta):
        return phi.T @ eta / S - target

    def max_residual(r):
        return float(max(np.max(np.abs(r[:n])), np.max(np.abs(r[n:]), initial=0.0) / np.sqrt(2.0)))

    lipschitz = np.linalg.eigvalsh(phi.T @ phi)[-1] / S**2
    step = 1.0 / lipschitz
    eta = _initial_eta(z * z, sigma / scale, lo, hi)
    r = residual_vec(eta)
    best, best_eta = max_residual(r), eta
    stop = 1e-3 * threshold
    y, t, f = eta, 1.0, 0.5 * r @ r
    it = 0
    if lo < hi:
        for it in range(1, max_iter + 1):
            if best <= stop:
                break
            grad = phi @ residual_vec(y) / S
            eta_new = np.clip(y - step * grad, lo, hi)
            r = residual_vec(eta_new)
            f_new = 0.5 * r @ r
            if f_new > f:
                # Adaptive restart keeps the accelerated iteration monotone.
                y, t = eta, 1.0
                continue
            t_new = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * t * t))
            y = eta_new + ((t - 1.0) / t_new) * (eta_new - eta)
            eta, t, f = eta_new, t_new, f_new
            cur = max_residual(r)
            if cur < best:
                best, best_eta = cur, eta
    return KinkCertificate(
        eta=best_eta,
        moment_residual=best,
        threshold=float(threshold),
        feasible=bool(best <= threshold),
        iterations=it,
        bounds=(float(lo), float(hi)),
    )


def converse_gap(G, H, c_grid, return_argmin=False):
    """Distance of ``G``'s spectrum from what an orthogonal optimum would force.

    If ``c * msgn(G)`` were optimal for a curvature differentiable at ``c``,
    then ``sigma = H'(c) / n`` for every singular value. Returns
    ``min_c max_i |sigma_i - H'(c)/n| / max_i sigma_i`` over ``c_grid``.
    """
    G = as_matrix(G, "G")
    m, n = G.shape
    if m < n:
        raise PreconditionError("converse certificate is only supported for m >= n")
    sigma = singular_values(G)
    if sigma[-1] <= 1e-12 * sigma[0]:
        raise PreconditionError("converse certificate needs a full-rank gradient")
    c_grid = np.asarray(c_grid, dtype=float).ravel()
    if c_grid.size == 0 or np.any(c_grid <= 0):
        raise PreconditionError("c_grid must be a nonempty list of positive radii")
    lo, hi = h_subdiff(H, c_grid)
    lo, hi = np.atleast_1d(lo), np.atleast_1d(hi)
    if np.any(lo != hi):
        raise PreconditionError("converse certificate needs H differentiable on the grid")
    gaps = np.max(np.abs(sigma[None, :] - lo[:, None] / n), axis=1) / sigma[0]
    best = int(np.argmin(gaps))
    if return_argmin:
        return float(gaps[best]), float(c_grid[best])
    return float(gaps[best])
