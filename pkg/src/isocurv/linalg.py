"""Dense real linear algebra: compact SVD, polar factor, trace inner products.

Matrices are plain ``numpy.ndarray`` objects of dtype float64. The SVD is a
one-sided (Hestenes) Jacobi method with a round-robin pair ordering, so every
rotation inside a round acts on disjoint column pairs and can be applied in
one vectorized step.
"""

from typing import NamedTuple

import numpy as np

from .errors import RankDeficientError, ShapeError, SvdConvergenceError

MAX_SWEEPS = 100
JACOBI_TOL = 1e-12
RANK_TOL = 1e-12


class SvdFactors(NamedTuple):
    """Compact SVD ``A = U @ diag(sigma) @ V.T`` with ``sigma`` descending."""

    U: np.ndarray
    sigma: np.ndarray
    V: np.ndarray

    def reconstruct(self):
        return (self.U * self.sigma) @ self.V.T


def as_matrix(a, name="matrix"):
    """Validate and copy ``a`` into a finite, 2-D float64 array."""
    arr = np.array(a, dtype=np.float64)
    if arr.ndim != 2:
        raise ShapeError(f"{name} must be 2-D, got shape {arr.shape}")
    if arr.size == 0:
        raise ShapeError(f"{name} must be non-empty")
    if not np.all(np.isfinite(arr)):
        raise ShapeError(f"{name} has non-finite entries")
    return arr


def _round_robin(n):
    # Circle method: n-1 rounds of n/2 disjoint pairs covering every pair once.
    players = list(range(n + (n % 2)))
    size = len(players)
    rounds = []
    for _ in range(size - 1):
        pairs = [(players[i], players[size - 1 - i]) for i in range(size // 2)]
        pairs = [(min(p), max(p)) for p in pairs if max(p) < n]
        if pairs:
            rounds.append(np.array(pairs, dtype=np.intp).T)
        players = [players[0], players[-1]] + players[1:-1]
    return rounds


def _null_cutoff(a):
    # Column norms at or below this are roundoff: they carry no direction.
    return max(a.shape) * np.finfo(float).eps * np.linalg.norm(a)


def _jacobi_tall(a, max_sweeps, tol):
    # a is m x n with m >= n; returns (W, V) with W = a V having orthogonal columns.
    m, n = a.shape
    W = a.copy()
    V = np.eye(n)
    rounds = _round_robin(n)
    # Rotating roundoff-level columns never settles, so they are left alone.
    negligible = _null_cutoff(a) ** 2
    for sweep in range(max_sweeps):
        rotated = False
        for p, q in rounds:
            wp, wq = W[:, p], W[:, q]
            alpha = np.einsum("ij,ij->j", wp, wp)
            beta = np.einsum("ij,ij->j", wq, wq)
            gamma = np.einsum("ij,ij->j", wp, wq)
            active = (np.abs(gamma) > tol * np.sqrt(alpha * beta)) & (
                np.minimum(alpha, beta) > negligible
            )
            if not np.any(active):
                continue
            rotated = True
            p, q = p[active], q[active]
            alpha, beta, gamma = alpha[active], beta[active], gamma[active]
            zeta = (beta - alpha) / (2.0 * gamma)
            t = np.where(zeta >= 0, 1.0, -1.0) / (np.abs(zeta) + np.hypot(1.0, zeta))
            c = 1.0 / np.hypot(1.0, t)
            s = c * t
            for M in (W, V):
                mp, mq = M[:, p].copy(), M[:, q]
                M[:, p] = c * mp - s * mq
                M[:, q] = s * mp + c * mq
        if not rotated:
            return W, V, sweep + 1
    raise SvdConvergenceError(f"one-sided Jacobi did not converge in {max_sweeps} sweeps")


def _complete_columns(U, bad):
    # Replace columns flagged in `bad` by unit vectors orthogonal to all others.
    m = U.shape[0]
    good = ~bad
    for j in np.flatnonzero(bad):
        basis = U[:, good]
        for i in range(m):
            cand = np.zeros(m)
            cand[i] = 1.0
            for _ in range(2):
                cand -= basis @ (basis.T @ cand)
            norm = np.linalg.norm(cand)
            if norm > 0.5:
                U[:, j] = cand / norm
                good[j] = True
                break
    return U


def _canonical_signs(U, V):
    for j in range(U.shape[1]):
        nz = np.flatnonzero(np.abs(U[:, j]) > 1e-12)
        if nz.size and U[nz[0], j] < 0:
            U[:, j] = -U[:, j]
            V[:, j] = -V[:, j]
    return U, V


def svd_compact(a, max_sweeps=MAX_SWEEPS, tol=JACOBI_TOL):
    """Compact singular value decomposition by one-sided Jacobi.

    Parameters
    ----------
    a : array_like, shape (m, n)
        Finite real matrix.
    max_sweeps : int
        Iteration cap; exceeding it raises ``SvdConvergenceError``.
    tol : float
        Relative off-diagonal threshold ``|a_p . a_q| <= tol |a_p| |a_q|``.

    Returns
    -------
    SvdFactors
        ``U`` (m x k), ``sigma`` (k,), ``V`` (n x k) with ``k = min(m, n)``,
        singular values descending, and the first entry of each ``U``
        column that is not numerically zero made nonnegative.
    """
    a = as_matrix(a)
    m, n = a.shape
    if m < n:
        f = svd_compact(a.T, max_sweeps, tol)
        U, V = _canonical_signs(f.V.copy(), f.U.copy())
        return SvdFactors(U, f.sigma, V)

    W, V, _ = _jacobi_tall(a, max_sweeps, tol)
    sigma = np.linalg.norm(W, axis=0)
    order = np.argsort(-sigma, kind="stable")
    sigma, W, V = sigma[order], W[:, order], V[:, order]

    # Must match the Jacobi cutoff: skipped columns are not orthogonal to the rest.
    bad = sigma <= _null_cutoff(a)
    U = np.zeros_like(W)
    U[:, ~bad] = W[:, ~bad] / sigma[~bad]
    if np.any(bad):
        U = _complete_columns(U, bad)
    U, V = _canonical_signs(U, V)
    return SvdFactors(U, sigma, V)


def singular_values(a):
    return svd_compact(a).sigma


def msgn_exact(a, rank_tol=RANK_TOL):
    """Unitary polar factor ``U V^T`` of a full-rank matrix."""
    U, sigma, V = svd_compact(a)
    if sigma[-1] <= rank_tol * sigma[0]:
        raise RankDeficientError(
            f"msgn needs full rank: sigma_min/sigma_max = {sigma[-1] / max(sigma[0], 1e-300):.3e}"
        )
    return U @ V.T


def trace_inner(a, b):
    """Frobenius inner product ``sum_ij a_ij b_ij``."""
    a, b = np.asarray(a, dtype=float), np.asarray(b, dtype=float)
    if a.shape != b.shape:
        raise ShapeError(f"shape mismatch {a.shape} vs {b.shape}")
    return float(np.einsum("ij,ij->", a, b))


def von_neumann_bound(a, b):
    """Return ``(|Tr(A B^T)|, sum_i sigma_i(A) sigma_i(B))``.

    Both spectra are sorted descending, so ``lhs <= rhs`` up to rounding.
    """
    a, b = as_matrix(a, "A"), as_matrix(b, "B")
    if a.shape != b.shape:
        raise ShapeError(f"shape mismatch {a.shape} vs {b.shape}")
    lhs = abs(trace_inner(a, b))
    rhs = float(np.dot(singular_values(a), singular_values(b)))
    return lhs, rhs


def compose(U, sigma, V):
    """``U @ diag(sigma) @ V.T``."""
    return (U * np.asarray(sigma, dtype=float)) @ V.T


def random_orthogonal(n, rng):
    """Haar-distributed orthogonal matrix (QR of a Gaussian with sign fix)."""
    q, r = np.linalg.qr(rng.standard_normal((n, n)))
    return q * np.where(np.diag(r) < 0, -1.0, 1.0)


def random_with_spectrum(m, n, sigma, rng):
    """Random ``m x n`` matrix with the given singular values."""
    k = min(m, n)
    sigma = np.asarray(sigma, dtype=float)
    if sigma.shape != (k,):
        raise ShapeError(f"need {k} singular values, got {sigma.shape}")
    U = random_orthogonal(m, rng)[:, :k]
    V = random_orthogonal(n, rng)[:, :k]
    return compose(U, sigma, V)
