"""Dense numeric primitives: Gaussian head, dense layers, Adam, finite differences.

Everything operates on float64 numpy arrays owned by the caller. Operations
are deterministic; the only in-place mutation is the documented parameter
update in :func:`adam_step`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

LOG_2PI = math.log(2.0 * math.pi)

# Bounds on the log-variance emitted by a Gaussian head. Keeps densities
# finite when the variance collapses during training.
LOG_VAR_MIN = -10.0
LOG_VAR_MAX = 10.0


def sigmoid(z: np.ndarray) -> np.ndarray:
    """Logistic function, stable for large |z|."""
    z = np.asarray(z, dtype=np.float64)
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def clamp_log_var(raw: float) -> float:
    return min(LOG_VAR_MAX, max(LOG_VAR_MIN, raw))


@dataclass(frozen=True)
class GaussianHead:
    """Mean and log-variance of a univariate Gaussian conditional."""

    mean: float
    log_var: float

    @classmethod
    def from_raw(cls, mean: float, raw_log_var: float) -> "GaussianHead":
        return cls(float(mean), clamp_log_var(float(raw_log_var)))

    @property
    def std(self) -> float:
        return math.exp(0.5 * self.log_var)


def gaussian_log_density(x: float, head: GaussianHead) -> float:
    """log N(x; mean, exp(log_var))."""
    if not (math.isfinite(x) and math.isfinite(head.mean) and math.isfinite(head.log_var)):
        raise ValueError("non-finite input")
    d = x - head.mean
    return -0.5 * LOG_2PI - 0.5 * head.log_var - 0.5 * d * d * math.exp(-head.log_var)


def gaussian_log_density_grad(x: float, head: GaussianHead) -> tuple[float, float, float]:
    """Partials of the log-density wrt (x, mean, log_var)."""
    d = x - head.mean
    inv_var = math.exp(-head.log_var)
    dx = -d * inv_var
    dmean = d * inv_var
    dlog_var = -0.5 + 0.5 * d * d * inv_var
    return dx, dmean, dlog_var


def sample_gaussian(head: GaussianHead, z: float) -> float:
    """Map one standard-normal draw through the head."""
    return head.mean + head.std * z


@dataclass
class DenseLayer:
    """Affine layer y = weight @ x + bias with analytic gradients."""

    weight: np.ndarray  # [out, in]
    bias: np.ndarray  # [out]

    def __post_init__(self):
        if self.weight.ndim != 2 or self.bias.shape != (self.weight.shape[0],):
            raise ValueError("inconsistent dense layer shapes")

    @classmethod
    def init(cls, n_in: int, n_out: int, rng: np.random.Generator) -> "DenseLayer":
        k = 1.0 / math.sqrt(n_in)
        return cls(
            weight=rng.uniform(-k, k, size=(n_out, n_in)),
            bias=rng.uniform(-k, k, size=n_out),
        )

    @classmethod
    def zeros(cls, n_in: int, n_out: int) -> "DenseLayer":
        return cls(weight=np.zeros((n_out, n_in)), bias=np.zeros(n_out))

    @property
    def n_in(self) -> int:
        return self.weight.shape[1]

    @property
    def n_out(self) -> int:
        return self.weight.shape[0]

    def forward(self, x: np.ndarray) -> np.ndarray:
        return self.weight @ x + self.bias

    def forward_batch(self, xs: np.ndarray) -> np.ndarray:
        """Rows of xs are inputs; returns one row per input."""
        return xs @ self.weight.T + self.bias

    def backward(self, x: np.ndarray, dy: np.ndarray):
        """Gradients for one recorded forward; returns (dweight, dbias, dx)."""
        dw = np.outer(dy, x)
        db = dy.copy()
        dx = self.weight.T @ dy
        return dw, db, dx


@dataclass
class AdamState:
    """Per-parameter moment estimates plus the shared step counter.

    lr_scale holds optional per-parameter multipliers on the base rate.
    """

    lr: float = 0.001
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    t: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)
    lr_scale: dict = field(default_factory=dict)


def adam_step(state: AdamState, params: dict, grads: dict) -> dict:
    """One Adam update with bias correction. Mutates params and state in place.

    Raises on non-finite gradients so divergence surfaces immediately.
    """
    for name, g in grads.items():
        if not np.all(np.isfinite(g)):
            raise FloatingPointError(f"diverged: non-finite gradient for {name}")
    state.t += 1
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1 ** state.t
    c2 = 1.0 - b2 ** state.t
    for name, p in params.items():
        g = grads[name]
        if name not in state.m:
            state.m[name] = np.zeros_like(p)
            state.v[name] = np.zeros_like(p)
        m = state.m[name]
        v = state.v[name]
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        lr = state.lr * state.lr_scale.get(name, 1.0)
        p -= lr * (m / c1) / (np.sqrt(v / c2) + state.eps)
    return params


def finite_difference_gradient(f, params: dict, delta: float = 1e-5) -> dict:
    """Central-difference gradient of a scalar function of a parameter dict.

    Perturbs each coordinate in place and restores it, so `f` must read the
    live arrays on every call.
    """
    grads = {}
    for name, p in params.items():
        g = np.zeros_like(p)
        flat_p = p.reshape(-1)
        flat_g = g.reshape(-1)
        for idx in range(flat_p.size):
            orig = flat_p[idx]
            flat_p[idx] = orig + delta
            f_plus = f(params)
            flat_p[idx] = orig - delta
            f_minus = f(params)
            flat_p[idx] = orig
            flat_g[idx] = (f_plus - f_minus) / (2.0 * delta)
        grads[name] = g
    return grads


def max_relative_error(a: dict, b: dict, floor: float = 1e-5) -> float:
    """Largest coordinate-wise relative discrepancy between two gradient dicts."""
    worst = 0.0
    for name in a:
        ga = np.asarray(a[name], dtype=np.float64)
        gb = np.asarray(b[name], dtype=np.float64)
        denom = np.maximum(floor, np.maximum(np.abs(ga), np.abs(gb)))
        worst = max(worst, float(np.max(np.abs(ga - gb) / denom)))
    return worst
