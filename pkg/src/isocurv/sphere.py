"""Expectations over the uniform unit sphere.

Closed forms use the Dirichlet(1/2, ..., 1/2) moments of the squared
coordinates: ``E z_i^2 = 1/n``, ``E z_i^4 = 3/(n(n+2))`` and
``E z_i^2 z_j^2 = 1/(n(n+2))`` for ``i != j``.

Monte Carlo draws normalize standard Gaussian vectors. Samples are produced
in fixed-size blocks, block ``b`` seeded from ``SeedSequence([seed, b])``,
so the stream depends only on ``(seed, sample_count, ambient_dim)`` and not
on how many threads generated it.
"""

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .errors import PreconditionError

DEFAULT_SAMPLES = 100_000
BLOCK_SIZE = 1 << 15


@lru_cache(maxsize=6)
def _draw(n, count, seed, threads):
    blocks = [(b, min(BLOCK_SIZE, count - b * BLOCK_SIZE)) for b in range(-(-count // BLOCK_SIZE))]

    def block(spec):
        index, rows = spec
        rng = np.random.default_rng(np.random.SeedSequence([seed, index]))
        g = rng.standard_normal((rows, n))
        return g / np.linalg.norm(g, axis=1, keepdims=True)

    if threads > 1 and len(blocks) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(block, blocks))
    else:
        parts = [block(b) for b in blocks]
    out = np.concatenate(parts, axis=0)
    out.setflags(write=False)
    return out


@dataclass(frozen=True)
class SphereSampler:
    """Reproducible source of uniform points on the unit sphere in R^n."""

    ambient_dim: int
    sample_count: int = DEFAULT_SAMPLES
    seed: int = 0
    threads: int = 1

    def __post_init__(self):
        if self.ambient_dim < 1:
            raise PreconditionError("ambient_dim must be >= 1")
        if self.sample_count < 2:
            raise PreconditionError("sample_count must be >= 2")
        if not 0 <= self.seed < 2**64:
            raise PreconditionError("seed must be a 64-bit unsigned integer")

    def draw(self):
        """Read-only ``(sample_count, ambient_dim)`` array of unit vectors."""
        return _draw(self.ambient_dim, self.sample_count, self.seed, max(1, self.threads))

    def squared_coords(self, k=None):
        """Squared coordinates ``z_i^2`` (rows sum to 1 when ``k`` is None)."""
        z = self.draw()
        if k is not None:
            z = z[:, :k]
        return z * z

    def with_seed(self, seed):
        return SphereSampler(self.ambient_dim, self.sample_count, seed, self.threads)


def second_moment(n):
    """``E z_i^2`` on the unit sphere in R^n."""
    if n < 1:
        raise PreconditionError("n must be >= 1")
    return 1.0 / n


def _check_sigma(sigma_tilde, n):
    s = np.asarray(sigma_tilde, dtype=float).ravel()
    if s.size > n:
        raise PreconditionError(f"{s.size} singular values but ambient dimension {n}")
    if np.any(s < 0):
        raise PreconditionError("singular values must be nonnegative")
    return s


def quartic_expectation(sigma_tilde, n, c=1.0):
    """Closed form of ``E[c |Q z|^4]`` for Q with singular values ``sigma_tilde``."""
    s = _check_sigma(sigma_tilde, n)
    s2 = s * s
    return c / (n * (n + 2)) * (s2.sum() ** 2 + 2.0 * np.dot(s2, s2))


def quartic_expectation_grad(sigma_tilde, n, c=1.0):
    s = _check_sigma(sigma_tilde, n)
    return 4.0 * c / (n * (n + 2)) * (np.dot(s, s) * s + 2.0 * s**3)


def quadratic_expectation(sigma_tilde, n, c=1.0):
    s = _check_sigma(sigma_tilde, n)
    return c * np.dot(s, s) / n


def _radii(sigma_tilde, sampler):
    s = _check_sigma(sigma_tilde, sampler.ambient_dim)
    w = sampler.squared_coords(s.size)
    return s, w, np.sqrt(w @ (s * s))


def mc_expectation(sigma_tilde, H, sampler):
    """Monte Carlo estimate of ``E H(|Q z|)``.

    Returns
    -------
    mean, std_err : float
        Sample mean and its standard error ``std / sqrt(S)``.
    """
    _, _, r = _radii(sigma_tilde, sampler)
    vals = H.value(r)
    return float(vals.mean()), float(vals.std(ddof=1) / np.sqrt(vals.size))


def _grad_terms(s, w, r, H):
    # Per-sample gradient of H(|Q z|) w.r.t. sigma_tilde: H'(r) s_i z_i^2 / r,
    # i.e. 2 q'(x) z_i^2 s_i with q(x) = H(sqrt x).
    slope = H.slope(r)
    safe = np.where(r > 0, r, 1.0)
    return np.where(r[:, None] > 0, (slope / safe)[:, None] * w * s, 0.0)


def mc_weighted_grad(sigma_tilde, H, sampler, return_stderr=False):
    """Gradient of ``mc_expectation`` in ``sigma_tilde``.

    Component ``i`` estimates ``2 E[q'(sum_l s_l^2 z_l^2) z_i^2] s_i`` with
    ``q(x) = H(sqrt(x))``, using the same samples as ``mc_expectation``.
    At a kink ``q'`` is taken from the left derivative of ``H``.
    """
    s, w, r = _radii(sigma_tilde, sampler)
    terms = _grad_terms(s, w, r, H)
    grad = terms.mean(axis=0)
    if return_stderr:
        return grad, terms.std(axis=0, ddof=1) / np.sqrt(terms.shape[0])
    return grad


def mc_grad_samples(sigma_tilde, H, sampler):
    """Per-sample gradient contributions, shape ``(S, k)``."""
    s, w, r = _radii(sigma_tilde, sampler)
    return _grad_terms(s, w, r, H)
