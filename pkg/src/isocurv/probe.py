"""Estimate curvature growth from Taylor remainders of a loss.

For a layer ``z = W u`` the probe perturbs ``W`` along random Gaussian
directions, rescales each ``dW u_i`` to length ``r`` and records the
remainder ``L(z + dz) - L(z) - <grad L(z), dz>``. The mean remainder over
``r`` is fitted to a power law ``r^(2 + alpha)``.
"""

from dataclasses import dataclass, field, asdict
import math

import numpy as np

from .errors import ProbeError

# -- configuration -------------------------------------------------------------


def default_radii():
    return np.geomspace(10**-1.5, 10.0, 24)


@dataclass(frozen=True)
class ProbeConfig:
    radii: tuple = tuple(default_radii().tolist())
    direction_count: int = 100
    input_count: int = 300
    seed: int = 0
    fit_window: tuple = (10**0.5, 10.0)

    def __post_init__(self):
        radii = np.asarray(self.radii, dtype=float)
        if radii.ndim != 1 or radii.size < 1:
            raise ProbeError("radii must be a nonempty list")
        if not np.all(np.isfinite(radii)) or radii[0] <= 0 or np.any(np.diff(radii) <= 0):
            raise ProbeError("radii must be positive and strictly ascending")
        if self.direction_count < 1 or self.input_count < 1:
            raise ProbeError("direction_count and input_count must be >= 1")
        if self.seed < 0:
            raise ProbeError("seed must be nonnegative")
        lo, hi = map(float, self.fit_window)
        tiny = 1e-12 * radii[-1]
        if not (lo < hi and lo >= radii[0] - tiny and hi <= radii[-1] + tiny):
            raise ProbeError(
                f"fit_window ({lo}, {hi}) must lie inside the radii range "
                f"[{radii[0]}, {radii[-1]}]"
            )
        object.__setattr__(self, "radii", tuple(radii.tolist()))
        object.__setattr__(self, "fit_window", (lo, hi))

    @classmethod
    def from_dict(cls, d):
        d = dict(d or {})
        known = {"radii", "direction_count", "input_count", "seed", "fit_window"}
        extra = set(d) - known
        if extra:
            raise ProbeError(f"unknown probe config keys {sorted(extra)}")
        try:
            if "radii" in d:
                d["radii"] = tuple(float(r) for r in d["radii"])
            if "fit_window" in d:
                w = d["fit_window"]
                if len(w) != 2:
                    raise ProbeError("fit_window must be a pair")
                d["fit_window"] = (float(w[0]), float(w[1]))
            for k in ("direction_count", "input_count", "seed"):
                if k in d:
                    if isinstance(d[k], bool) or int(d[k]) != d[k]:
                        raise ProbeError(f"{k} must be an integer")
                    d[k] = int(d[k])
        except (TypeError, ValueError) as exc:
            raise ProbeError(f"malformed probe config: {exc}") from exc
        return cls(**d)

    def to_dict(self):
        out = asdict(self)
        out["radii"] = list(self.radii)
        out["fit_window"] = list(self.fit_window)
        return out


# -- oracle losses ---------------------------------------------------------------
#
# Each oracle evaluates a per-input loss on pre-activations ``z`` of shape
# ``(..., N, m)``; axis -2 indexes the inputs, so oracles that carry labels
# can line them up with ``z``.


class QuadraticOracle:
    """``L(v) = v^T M v / 2``."""

    variant = "quadratic"

    def __init__(self, M):
        M = np.asarray(M, dtype=float)
        if M.ndim != 2 or M.shape[0] != M.shape[1]:
            raise ProbeError("M must be square")
        if not np.allclose(M, M.T):
            raise ProbeError("M must be symmetric")
        self.M = 0.5 * (M + M.T)

    def loss(self, z):
        return 0.5 * np.einsum("...i,ij,...j->...", z, self.M, z)

    def grad(self, z):
        return z @ self.M


class PurePowerOracle:
    """``L(v) = sum_i |v_i|^p`` with ``p >= 2``."""

    variant = "pure_power"

    def __init__(self, p):
        if not p >= 2:
            raise ProbeError("pure power oracle needs p >= 2")
        self.p = float(p)

    def loss(self, z):
        return np.sum(np.abs(z) ** self.p, axis=-1)

    def grad(self, z):
        return self.p * np.abs(z) ** (self.p - 1.0) * np.sign(z)


_GELU_K = math.sqrt(2.0 / math.pi)


def gelu(x):
    return 0.5 * x * (1.0 + np.tanh(_GELU_K * (x + 0.044715 * x**3)))


def gelu_grad(x):
    t = np.tanh(_GELU_K * (x + 0.044715 * x**3))
    return 0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * _GELU_K * (1.0 + 3 * 0.044715 * x * x)


def _log_softmax(logits):
    shifted = logits - logits.max(axis=-1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=-1, keepdims=True))


class TinyMLP:
    """Two-hidden-layer GELU network with a softmax cross-entropy head.

    Layer sizes are 8 -> 16 -> 16 -> 10. Weights start as seeded standard
    normals scaled by ``1/sqrt(fan_in)``. Labels come from an independently
    drawn teacher network of the same shape; the student is then trained by
    full-batch gradient descent so the probe runs near a trained solution
    instead of at initialization.

    The probed layer is ``target_layer`` (0, 1 or 2); ``loss`` and ``grad``
    take that layer's pre-activations.
    """

    variant = "tiny_mlp"
    sizes = (8, 16, 16, 10)

    def __init__(self, seed=0, input_count=300, target_layer=1, train_steps=1000,
                 learning_rate=0.5):
        if target_layer not in (0, 1, 2):
            raise ProbeError("target_layer must be 0, 1 or 2")
        rng = np.random.default_rng(seed)
        self.weights = self._init(rng)
        teacher = self._init(rng)
        self.x = rng.standard_normal((input_count, self.sizes[0]))
        self.labels = np.argmax(self._forward(teacher, self.x)[-1], axis=-1)
        self.target_layer = target_layer
        self.train_loss = self._train(train_steps, learning_rate)

    def _init(self, rng):
        return [
            rng.standard_normal((o, i)) / math.sqrt(i)
            for i, o in zip(self.sizes[:-1], self.sizes[1:])
        ]

    @staticmethod
    def _forward(weights, x):
        # Pre-activations of every layer; the last entry is the logits.
        zs, h = [], x
        for k, W in enumerate(weights):
            z = h @ W.T
            zs.append(z)
            if k < len(weights) - 1:
                h = gelu(z)
        return zs

    def _train(self, steps, lr):
        N = self.x.shape[0]
        onehot = np.eye(self.sizes[-1])[self.labels]
        loss = np.nan
        for _ in range(steps):
            zs = self._forward(self.weights, self.x)
            logp = _log_softmax(zs[-1])
            loss = -np.mean(logp[np.arange(N), self.labels])
            delta = (np.exp(logp) - onehot) / N
            grads = [None] * len(self.weights)
            for k in range(len(self.weights) - 1, -1, -1):
                h_in = self.x if k == 0 else gelu(zs[k - 1])
                grads[k] = delta.T @ h_in
                if k > 0:
                    delta = (delta @ self.weights[k]) * gelu_grad(zs[k - 1])
            self.weights = [W - lr * g for W, g in zip(self.weights, grads)]
        return float(loss)

    @property
    def target_weight(self):
        return self.weights[self.target_layer]

    @property
    def target_inputs(self):
        """Inputs ``u_i`` feeding the target layer, shape ``(N, fan_in)``."""
        if self.target_layer == 0:
            return self.x
        return gelu(self._forward(self.weights, self.x)[self.target_layer - 1])

    def _head(self, z):
        zs = [z]
        for W in self.weights[self.target_layer + 1:]:
            zs.append(gelu(zs[-1]) @ W.T)
        return zs

    def loss(self, z):
        logp = _log_softmax(self._head(z)[-1])
        labels = np.broadcast_to(self.labels, z.shape[:-1])
        return -np.take_along_axis(logp, labels[..., None], axis=-1)[..., 0]

    def grad(self, z):
        zs = self._head(z)
        logp = _log_softmax(zs[-1])
        labels = np.broadcast_to(self.labels, z.shape[:-1])
        delta = np.exp(logp)
        np.put_along_axis(
            delta, labels[..., None],
            np.take_along_axis(delta, labels[..., None], axis=-1) - 1.0, axis=-1,
        )
        for k in range(len(zs) - 1, 0, -1):
            W = self.weights[self.target_layer + k]
            delta = (delta @ W) * gelu_grad(zs[k - 1])
        return delta


def build_oracle(spec, input_count=300):
    """Oracle, layer weight and layer inputs from a JSON-style dict.

    ``{"variant": "quadratic", "dim": 16, "seed": 0}`` (optional ``"matrix"``),
    ``{"variant": "pure_power", "p": 4, "dim": 16, "base": "zero"}`` or
    ``{"variant": "tiny_mlp", "seed": 0, "target_layer": 1}``.
    """
    if not isinstance(spec, dict) or "variant" not in spec:
        raise ProbeError("oracle spec must be an object with a 'variant' key")
    spec = dict(spec)
    variant = spec.pop("variant")
    allowed = {
        "quadratic": {"dim", "fan_in", "seed", "matrix"},
        "pure_power": {"p", "dim", "fan_in", "seed", "base"},
        "tiny_mlp": {"seed", "target_layer", "train_steps", "learning_rate"},
    }
    if variant not in allowed:
        raise ProbeError(f"unknown oracle variant {variant!r}")
    extra = set(spec) - allowed[variant]
    if extra:
        raise ProbeError(f"{variant}: unexpected keys {sorted(extra)}")
    seed = int(spec.get("seed", 0))
    if variant == "tiny_mlp":
        net = TinyMLP(
            seed=seed,
            input_count=input_count,
            target_layer=int(spec.get("target_layer", 1)),
            train_steps=int(spec.get("train_steps", 1000)),
            learning_rate=float(spec.get("learning_rate", 0.5)),
        )
        return net, net.target_weight, net.target_inputs

    rng = np.random.default_rng(seed)
    if variant == "quadratic" and "matrix" in spec:
        M = np.asarray(spec["matrix"], dtype=float)
        if M.ndim != 2:
            raise ProbeError("matrix must be a 2-D list")
        m = M.shape[0]
    else:
        m = int(spec.get("dim", 16))
        M = None
    n = int(spec.get("fan_in", m))
    if m < 1 or n < 1:
        raise ProbeError("dimensions must be positive")
    if variant == "quadratic":
        if M is None:
            A = rng.standard_normal((m, m))
            M = A @ A.T / m + 0.1 * np.eye(m)
        oracle = QuadraticOracle(M)
        W = rng.standard_normal((m, n)) / math.sqrt(n)
    else:
        oracle = PurePowerOracle(float(spec.get("p", 4)))
        base = spec.get("base", "zero")
        if base not in ("zero", "random"):
            raise ProbeError("base must be 'zero' or 'random'")
        W = np.zeros((m, n)) if base == "zero" else rng.standard_normal((m, n)) / math.sqrt(n)
    U = rng.standard_normal((input_count, n))
    return oracle, W, U


# -- probe -------------------------------------------------------------------------


@dataclass
class ProbeReport:
    radii: np.ndarray
    mean: np.ndarray          # mean remainder / r^2
    stderr: np.ndarray
    q10: np.ndarray
    q50: np.ndarray
    q90: np.ndarray
    n_samples: np.ndarray
    fitted_exponent: float
    r_squared: float
    fit_window: tuple
    nonpositive_in_window: bool
    negative_fraction: np.ndarray = field(default=None)

    def summary(self):
        return {
            "fitted_exponent": self.fitted_exponent,
            "r_squared": self.r_squared,
            "fit_window": list(self.fit_window),
            "nonpositive_in_window": self.nonpositive_in_window,
            "radius_count": int(self.radii.size),
            "sample_count": int(self.n_samples[0]),
            "max_negative_fraction": float(np.max(self.negative_fraction)),
        }


def fit_exponent(radii, means, window):
    """OLS slope of ``log(mean)`` against ``log(r)`` for radii inside ``window``.

    Returns
    -------
    exponent, r_squared : float
    """
    radii = np.asarray(radii, dtype=float)
    means = np.asarray(means, dtype=float)
    lo, hi = window
    tiny = 1e-12 * max(abs(hi), 1.0)
    inside = (radii >= lo - tiny) & (radii <= hi + tiny)
    if inside.sum() < 3:
        raise ProbeError(f"need at least 3 radii inside the fit window, got {int(inside.sum())}")
    if np.any(means[inside] <= 0):
        raise ProbeError("nonpositive mean remainder inside the fit window")
    x = np.log(radii[inside])
    y = np.log(means[inside])
    xc = x - x.mean()
    slope = float(xc @ (y - y.mean()) / (xc @ xc))
    fitted = y.mean() + slope * xc
    ss_res = float(np.sum((y - fitted) ** 2))
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
    return slope, r2


def remainders(oracle, W, U, config):
    """Remainder / r^2 for every (radius, direction, input); shape ``(R, D, N)``."""
    W = np.asarray(W, dtype=float)
    U = np.asarray(U, dtype=float)
    if U.ndim != 2 or U.shape[1] != W.shape[1]:
        raise ProbeError("inputs must be (N, fan_in) matching the layer")
    if np.any(np.linalg.norm(U, axis=1) == 0):
        raise ProbeError("inputs must be nonzero")
    rng = np.random.default_rng(config.seed)
    dW = rng.standard_normal((config.direction_count,) + W.shape)
    z = U @ W.T                                   # (N, m)
    dz = np.einsum("ni,dmi->dnm", U, dW)          # (D, N, m)
    norms = np.linalg.norm(dz, axis=-1, keepdims=True)
    if np.any(norms == 0):
        raise ProbeError("degenerate direction: dW u_i = 0 for some pair")
    unit = dz / norms
    L0 = oracle.loss(z)
    slope = np.sum(oracle.grad(z)[None] * unit, axis=-1)   # (D, N)
    out = np.empty((len(config.radii),) + slope.shape)
    for k, r in enumerate(config.radii):
        rem = oracle.loss(z[None] + r * unit) - L0[None] - r * slope
        out[k] = rem / (r * r)
    return out


def probe(oracle, layer, inputs, config=None):
    """Per-radius statistics of remainder / r^2 and the fitted growth exponent."""
    config = config or ProbeConfig()
    R = remainders(oracle, layer, inputs, config)
    flat = R.reshape(R.shape[0], -1)
    count = flat.shape[1]
    radii = np.asarray(config.radii)
    mean = flat.mean(axis=1)
    stderr = flat.std(axis=1, ddof=1) / np.sqrt(count) if count > 1 else np.zeros_like(mean)
    q10, q50, q90 = np.quantile(flat, [0.1, 0.5, 0.9], axis=1)
    try:
        exponent, r2 = fit_exponent(radii, mean * radii**2, config.fit_window)
        flagged = False
    except ProbeError:
        # Negative remainders are kept, never clipped; the fit is reported as NaN.
        lo, hi = config.fit_window
        inside = (radii >= lo) & (radii <= hi)
        flagged = bool(np.any(mean[inside] <= 0))
        if not flagged:
            raise
        exponent, r2 = float("nan"), float("nan")
    return ProbeReport(
        radii=radii,
        mean=mean,
        stderr=stderr,
        q10=q10,
        q50=q50,
        q90=q90,
        n_samples=np.full(radii.size, count),
        fitted_exponent=float(exponent),
        r_squared=float(r2),
        fit_window=tuple(config.fit_window),
        nonpositive_in_window=flagged,
        negative_fraction=np.mean(flat < 0, axis=1),
    )
