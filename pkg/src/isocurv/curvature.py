"""Curvature functions H: values, derivative selections and subdifferentials.

Every variant is a nondecreasing convex function on ``[0, inf)``. Methods are
vectorized over ``r``. ``slope`` is the derivative selection used by the
Monte Carlo solvers: the left derivative, which coincides with ``H'``
wherever ``H`` is differentiable.
"""

from dataclasses import dataclass, field
import math

import numpy as np

from .errors import CurvatureError, PreconditionError

CONVEXITY_TOL = 1e-9


def _positive(name, x):
    if not (isinstance(x, (int, float)) and math.isfinite(x) and x > 0):
        raise CurvatureError(f"{name} must be a finite positive number, got {x!r}")
    return float(x)


def _nonneg_r(r):
    r = np.asarray(r, dtype=float)
    if np.any(r < 0) or np.any(np.isnan(r)):
        raise PreconditionError("curvature evaluated at a negative radius")
    return r


class Curvature:
    variant = ""

    def value(self, r):
        raise NotImplementedError

    def slope(self, r):
        raise NotImplementedError

    def subdiff(self, r):
        s = self.slope(r)
        return s, s

    @property
    def smooth(self):
        return True

    def to_dict(self):
        raise NotImplementedError


@dataclass(frozen=True)
class Quadratic(Curvature):
    c: float
    variant = "quadratic"

    def __post_init__(self):
        _positive("c", self.c)

    def value(self, r):
        r = _nonneg_r(r)
        return self.c * r * r

    def slope(self, r):
        return 2.0 * self.c * _nonneg_r(r)

    def to_dict(self):
        return {"variant": self.variant, "c": self.c}


@dataclass(frozen=True)
class Power(Curvature):
    """``H(r) = c r^(2 + alpha)``; ``alpha >= -1`` keeps it convex."""

    c: float
    alpha: float
    variant = "power"

    def __post_init__(self):
        _positive("c", self.c)
        if not (math.isfinite(self.alpha) and self.alpha >= -1.0):
            raise CurvatureError(f"alpha must be >= -1, got {self.alpha!r}")

    def value(self, r):
        return self.c * _nonneg_r(r) ** (2.0 + self.alpha)

    def slope(self, r):
        return self.c * (2.0 + self.alpha) * _nonneg_r(r) ** (1.0 + self.alpha)

    def to_dict(self):
        return {"variant": self.variant, "c": self.c, "alpha": self.alpha}


@dataclass(frozen=True)
class Quartic(Curvature):
    c: float
    variant = "quartic"

    def __post_init__(self):
        _positive("c", self.c)

    def value(self, r):
        r = _nonneg_r(r)
        return self.c * r**4

    def slope(self, r):
        return 4.0 * self.c * _nonneg_r(r) ** 3

    def to_dict(self):
        return {"variant": self.variant, "c": self.c}


@dataclass(frozen=True)
class Kink(Curvature):
    """Two linear pieces: slope ``A`` up to ``r_tilde``, slope ``B`` after."""

    A: float
    B: float
    r_tilde: float
    variant = "kink"

    def __post_init__(self):
        if not (math.isfinite(self.A) and self.A >= 0):
            raise CurvatureError(f"A must be >= 0, got {self.A!r}")
        if not (math.isfinite(self.B) and self.B > self.A):
            raise CurvatureError(f"kink needs B > A, got A={self.A!r}, B={self.B!r}")
        _positive("r_tilde", self.r_tilde)

    def value(self, r):
        r = _nonneg_r(r)
        return np.where(
            r <= self.r_tilde,
            self.A * r,
            self.A * self.r_tilde + self.B * (r - self.r_tilde),
        )

    def slope(self, r):
        r = _nonneg_r(r)
        return np.where(r <= self.r_tilde, self.A, self.B)

    def subdiff(self, r):
        r = _nonneg_r(r)
        lo = np.where(r <= self.r_tilde, self.A, self.B)
        hi = np.where(r < self.r_tilde, self.A, self.B)
        return lo, hi

    @property
    def smooth(self):
        return False

    def to_dict(self):
        return {"variant": self.variant, "A": self.A, "B": self.B, "r_tilde": self.r_tilde}


def isotonic_nonneg(y, w):
    """Weighted L2 projection of ``y`` onto nondecreasing, nonnegative sequences."""
    blocks = []  # [mean, weight, length]
    for yi, wi in zip(y, w):
        blocks.append([float(yi), float(wi), 1])
        while len(blocks) > 1 and blocks[-2][0] > blocks[-1][0]:
            m2, w2, n2 = blocks.pop()
            m1, w1, n1 = blocks.pop()
            wt = w1 + w2
            blocks.append([(m1 * w1 + m2 * w2) / wt, wt, n1 + n2])
    out = np.concatenate([np.full(n, m) for m, _, n in blocks])
    return np.maximum(out, 0.0)


@dataclass(frozen=True)
class Tabulated(Curvature):
    """Piecewise-linear convex interpolant of sampled ``(radius, H)`` pairs.

    The curve is anchored at ``H(0) = 0``. Segment slopes are projected onto
    nondecreasing nonnegative sequences (weights = segment lengths) and the
    largest resulting change in a tabulated value is kept in
    ``projection_distance``. Beyond the last radius the last slope continues.
    """

    radii: tuple
    values: tuple
    knots: np.ndarray = field(init=False, repr=False, compare=False)
    knot_values: np.ndarray = field(init=False, repr=False, compare=False)
    slopes: np.ndarray = field(init=False, repr=False, compare=False)
    projection_distance: float = field(init=False, compare=False)
    variant = "tabulated"

    def __post_init__(self):
        radii = np.asarray(self.radii, dtype=float)
        values = np.asarray(self.values, dtype=float)
        if radii.ndim != 1 or radii.shape != values.shape or radii.size < 1:
            raise CurvatureError("tabulated radii and values must be equal-length 1-D lists")
        if not (np.all(np.isfinite(radii)) and np.all(np.isfinite(values))):
            raise CurvatureError("tabulated data must be finite")
        if radii[0] <= 0 or np.any(np.diff(radii) <= 0):
            raise CurvatureError("tabulated radii must be positive and strictly ascending")
        object.__setattr__(self, "radii", tuple(radii.tolist()))
        object.__setattr__(self, "values", tuple(values.tolist()))
        knots = np.concatenate([[0.0], radii])
        raw = np.concatenate([[0.0], values])
        dr = np.diff(knots)
        slopes = isotonic_nonneg(np.diff(raw) / dr, dr)
        fitted = np.concatenate([[0.0], np.cumsum(slopes * dr)])
        object.__setattr__(self, "knots", knots)
        object.__setattr__(self, "knot_values", fitted)
        object.__setattr__(self, "slopes", slopes)
        object.__setattr__(self, "projection_distance", float(np.max(np.abs(fitted - raw))))

    def _segment(self, r, side):
        idx = np.searchsorted(self.knots, r, side=side) - 1
        return np.clip(idx, 0, self.slopes.size - 1)

    def value(self, r):
        r = _nonneg_r(r)
        i = self._segment(r, "right")
        return self.knot_values[i] + self.slopes[i] * (r - self.knots[i])

    def slope(self, r):
        return self.slopes[self._segment(_nonneg_r(r), "left")]

    def subdiff(self, r):
        r = _nonneg_r(r)
        return self.slopes[self._segment(r, "left")], self.slopes[self._segment(r, "right")]

    @property
    def smooth(self):
        return bool(np.all(np.diff(self.slopes) == 0))

    def to_dict(self):
        return {"variant": self.variant, "radii": list(self.radii), "values": list(self.values)}


_VARIANTS = {
    "quadratic": (Quadratic, ("c",)),
    "power": (Power, ("c", "alpha")),
    "quartic": (Quartic, ("c",)),
    "kink": (Kink, ("A", "B", "r_tilde")),
    "tabulated": (Tabulated, ("radii", "values")),
}


def from_dict(d):
    """Build a curvature spec from its JSON form, e.g. ``{"variant": "quartic", "c": 1.0}``."""
    if not isinstance(d, dict) or "variant" not in d:
        raise CurvatureError("curvature spec must be an object with a 'variant' key")
    variant = d["variant"]
    if variant not in _VARIANTS:
        raise CurvatureError(f"unknown curvature variant {variant!r}")
    cls, keys = _VARIANTS[variant]
    extra = set(d) - set(keys) - {"variant"}
    missing = [k for k in keys if k not in d]
    if missing or extra:
        raise CurvatureError(f"{variant}: missing {missing}, unexpected {sorted(extra)}")
    args = {}
    for k in keys:
        v = d[k]
        if k in ("radii", "values"):
            if not isinstance(v, list):
                raise CurvatureError(f"{k} must be a list")
        elif isinstance(v, bool) or not isinstance(v, (int, float)):
            raise CurvatureError(f"{k} must be a number")
        else:
            v = float(v)
        args[k] = v
    return cls(**args)


def h_value(spec, r):
    out = spec.value(r)
    return float(out) if np.ndim(out) == 0 else out


def h_subdiff(spec, r):
    """Closed slope interval ``(lo, hi)`` of ``H`` at ``r > 0``."""
    r = np.asarray(r, dtype=float)
    if np.any(r <= 0):
        raise PreconditionError("subdifferential requested at r <= 0")
    lo, hi = spec.subdiff(r)
    if np.ndim(lo) == 0:
        return float(lo), float(hi)
    return lo, hi


def assumption1_holds(spec, grid):
    """True iff ``H`` strictly increases and ``x -> H(sqrt(x))`` is convex on the grid.

    Convexity is checked through consecutive slopes ``s_k`` of the points
    ``(r_k^2, H(r_k))``: ``s_{k+1} - s_k >= -1e-9 (1 + |s_k| + |s_{k+1}|)``.
    """
    grid = np.asarray(grid, dtype=float)
    if grid.ndim != 1 or grid.size < 2 or grid[0] <= 0 or np.any(np.diff(grid) <= 0):
        raise PreconditionError("grid must be ascending positive radii")
    y = np.asarray(spec.value(grid), dtype=float)
    if np.any(np.diff(y) <= 0):
        return False
    x = grid * grid
    s = np.diff(y) / np.diff(x)
    if s.size < 2:
        return True
    ds = np.diff(s)
    return bool(np.all(ds >= -CONVEXITY_TOL * (1.0 + np.abs(s[:-1]) + np.abs(s[1:]))))


def radius_for_slope(spec, target, hi=1.0, rtol=1e-15):
    """Smallest ``r`` with ``H'(r) >= target`` (bisection on the monotone slope)."""
    if target <= float(spec.slope(0.0)):
        return 0.0
    lo = 0.0
    while float(spec.slope(hi)) < target:
        lo, hi = hi, 2.0 * hi
        if hi > 1e300:
            raise PreconditionError("slope never reaches target")
    while hi - lo > rtol * hi:
        mid = 0.5 * (lo + hi)
        if float(spec.slope(mid)) < target:
            lo = mid
        else:
            hi = mid
    return hi
