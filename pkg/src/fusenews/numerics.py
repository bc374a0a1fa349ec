"""Dense float64 linear algebra and differentiable-layer helpers.

All operations are pure functions of their inputs and work on numpy arrays:
matrices are 2-D float64, vectors 1-D float64. Public operations validate
shapes and reject non-finite results, so downstream layers can assume clean
values. numpy supplies the raw arithmetic; this module owns the contracts.
"""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from .errors import DimensionError, NonFiniteError

Array = np.ndarray

_MASK64 = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15


class Rng:
    """SplitMix64 pseudo-random generator.

    The 64-bit state advances by the golden-ratio increment and each output
    is the mix/finalizer of the new state. Pure integer arithmetic, so the
    stream for a given seed is bit-exact on every platform and Python build.
    """

    def __init__(self, seed: int):
        self.seed = seed & _MASK64
        self._state = seed & _MASK64

    def next_uint64(self) -> int:
        self._state = (self._state + _GOLDEN) & _MASK64
        z = self._state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
        return (z ^ (z >> 31)) & _MASK64

    def uniform(self, low: float = 0.0, high: float = 1.0) -> float:
        """Uniform double in [low, high), using the top 53 bits of one draw."""
        u = (self.next_uint64() >> 11) * (1.0 / (1 << 53))
        return low + (high - low) * u

    def uniforms(self, n: int, low: float = 0.0, high: float = 1.0) -> Array:
        return np.array([self.uniform(low, high) for _ in range(n)], dtype=np.float64)

    def randint(self, n: int) -> int:
        """Unbiased integer in [0, n) via rejection sampling."""
        if n <= 0:
            raise ValueError("randint requires n >= 1")
        limit = ((1 << 64) // n) * n
        while True:
            draw = self.next_uint64()
            if draw < limit:
                return draw % n

    def shuffle(self, items: list) -> None:
        """In-place Fisher-Yates shuffle."""
        for i in range(len(items) - 1, 0, -1):
            j = self.randint(i + 1)
            items[i], items[j] = items[j], items[i]

    def permutation(self, n: int) -> list[int]:
        items = list(range(n))
        self.shuffle(items)
        return items

    def spawn(self) -> "Rng":
        """Derive an independent child generator from the current stream."""
        return Rng(self.next_uint64())


def _require_finite(arr: Array, what: str) -> Array:
    if not np.all(np.isfinite(arr)):
        raise NonFiniteError(f"{what} contains NaN or Inf")
    return arr


def matmul(a: Array, b: Array) -> Array:
    """Matrix product of two 2-D arrays with explicit shape validation."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.ndim != 2 or b.ndim != 2:
        raise DimensionError(
            f"matmul expects 2-D operands, got {a.ndim}-D and {b.ndim}-D"
        )
    if a.shape[1] != b.shape[0]:
        raise DimensionError(
            f"matmul inner dimensions disagree: {a.shape} x {b.shape}"
        )
    return _require_finite(a @ b, "matmul result")


def softmax_stable(v: Array) -> Array:
    """Numerically stable softmax of a vector (max-subtraction form)."""
    v = np.asarray(v, dtype=np.float64)
    if v.ndim != 1 or v.size == 0:
        raise DimensionError("softmax_stable expects a non-empty 1-D vector")
    _require_finite(v, "softmax_stable input")
    shifted = v - np.max(v)
    e = np.exp(shifted)
    return e / np.sum(e)


def row_softmax(m: Array) -> Array:
    """Stable softmax applied independently to each row of a 2-D array."""
    m = np.asarray(m, dtype=np.float64)
    if m.ndim != 2 or m.shape[1] == 0:
        raise DimensionError("row_softmax expects a 2-D array with >= 1 column")
    _require_finite(m, "row_softmax input")
    shifted = m - np.max(m, axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / np.sum(e, axis=1, keepdims=True)


def layer_norm_cached(
    v: Array, gamma: Array, beta: Array, eps: float = 1e-5
) -> tuple[Array, dict]:
    """Layer normalization returning the output plus the cache for backward."""
    v = np.asarray(v, dtype=np.float64)
    gamma = np.asarray(gamma, dtype=np.float64)
    beta = np.asarray(beta, dtype=np.float64)
    if not (v.ndim == gamma.ndim == beta.ndim == 1):
        raise DimensionError("layer_norm expects 1-D v, gamma, beta")
    if not (v.shape == gamma.shape == beta.shape):
        raise DimensionError(
            f"layer_norm length mismatch: v{v.shape}, gamma{gamma.shape}, beta{beta.shape}"
        )
    if v.size == 0:
        raise DimensionError("layer_norm expects a non-empty vector")
    if eps <= 0:
        raise ValueError("layer_norm eps must be positive")
    mean = float(np.mean(v))
    var = float(np.mean((v - mean) ** 2))
    inv_std = 1.0 / np.sqrt(var + eps)
    x_hat = (v - mean) * inv_std
    out = gamma * x_hat + beta
    cache = {"x_hat": x_hat, "inv_std": inv_std, "gamma": gamma}
    return out, cache


def layer_norm(v: Array, gamma: Array, beta: Array, eps: float = 1e-5) -> Array:
    """Layer normalization: gamma * (v - mean) / sqrt(var + eps) + beta.

    Population statistics over the vector; zero-variance inputs map to beta.
    """
    return layer_norm_cached(v, gamma, beta, eps)[0]


def layer_norm_backward(d_out: Array, cache: dict) -> tuple[Array, Array, Array]:
    """Gradients of layer_norm w.r.t. its input, gamma and beta."""
    x_hat = cache["x_hat"]
    inv_std = cache["inv_std"]
    gamma = cache["gamma"]
    d_beta = np.asarray(d_out, dtype=np.float64).copy()
    d_gamma = d_out * x_hat
    d_xhat = d_out * gamma
    # dx = inv_std * (d_xhat - mean(d_xhat) - x_hat * mean(d_xhat * x_hat))
    d_v = inv_std * (
        d_xhat - np.mean(d_xhat) - x_hat * np.mean(d_xhat * x_hat)
    )
    return d_v, d_gamma, d_beta


def xavier_init(rows: int, cols: int, rng: Rng) -> Array:
    """Glorot-uniform matrix: entries uniform in +/- sqrt(6 / (rows + cols)).

    Entries are drawn row-major from ``rng``, so the result is a pure
    function of (rows, cols, seed state).
    """
    if rows < 1 or cols < 1:
        raise DimensionError(f"xavier_init needs positive dims, got ({rows}, {cols})")
    limit = np.sqrt(6.0 / (rows + cols))
    flat = rng.uniforms(rows * cols, -limit, limit)
    return flat.reshape(rows, cols)


def grad_check(
    f: Callable[[Array], tuple[float, Array]],
    theta: Array,
    h: float = 1e-5,
    coords: Sequence[int] | None = None,
) -> float:
    """Compare an analytic gradient against central finite differences.

    ``f(theta)`` must return ``(value, gradient)``; only the value part is
    used for the finite-difference probe, so the two routes stay independent.
    Returns the max over probed coordinates of
    ``|analytic - numeric| / max(1, |analytic|, |numeric|)``.

    ``coords`` restricts the probe to a subset of coordinates (all by
    default); useful when theta is large and the check budget is bounded.
    """
    if not (1e-7 <= h <= 1e-3):
        raise ValueError(f"step size h={h} outside [1e-7, 1e-3]")
    theta = np.asarray(theta, dtype=np.float64).copy()
    value, analytic = f(theta)
    if not np.isfinite(value):
        raise NonFiniteError("grad_check: objective is not finite at theta")
    analytic = np.asarray(analytic, dtype=np.float64)
    if analytic.shape != theta.shape:
        raise DimensionError(
            f"gradient shape {analytic.shape} != theta shape {theta.shape}"
        )
    _require_finite(analytic, "grad_check analytic gradient")
    if coords is None:
        coords = range(theta.size)
    worst = 0.0
    for i in coords:
        probe = theta.copy()
        probe[i] = theta[i] + h
        up, _ = f(probe)
        probe[i] = theta[i] - h
        down, _ = f(probe)
        if not (np.isfinite(up) and np.isfinite(down)):
            raise NonFiniteError(f"grad_check: objective not finite near coord {i}")
        numeric = (up - down) / (2.0 * h)
        g = float(analytic[i])
        err = abs(g - numeric) / max(1.0, abs(g), abs(numeric))
        worst = max(worst, err)
    return worst
