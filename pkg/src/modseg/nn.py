"""Dense numerical kernel: activations, init, softmax, Adam, gradient checking.

Matrices are plain float64 ``numpy.ndarray`` values. Randomness always goes
through :func:`make_rng`, a counter-based Philox generator keyed on
``(seed, stream)``, so every draw is reproducible across platforms and
process boundaries.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Dict, Tuple

import numpy as np
from scipy.special import erf

from .errors import ShapeMismatch

ACTIVATIONS = ("silu", "selu", "gelu", "relu")

# Canonical 16-digit SELU constants.
SELU_LAMBDA = 1.0507009873554805
SELU_ALPHA = 1.6732632423543772

_INV_SQRT2 = 1.0 / np.sqrt(2.0)
_INV_SQRT2PI = 1.0 / np.sqrt(2.0 * np.pi)


def make_rng(seed: int, stream: int = 0) -> np.random.Generator:
    """Counter-based Philox generator keyed on (seed, stream).

    Distinct streams under one seed are statistically independent, which is
    how per-image and per-restart randomness is derived without coupling.
    """
    key = np.array([seed % (1 << 64), stream % (1 << 64)], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


def sigmoid(x):
    # Split by sign to avoid overflow in exp for large |x|.
    x = np.asarray(x, dtype=np.float64)
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def activation(kind: str, x):
    """Apply the named activation elementwise. ``x`` may be scalar or array."""
    x = np.asarray(x, dtype=np.float64)
    if kind == "silu":
        return x * sigmoid(x)
    if kind == "selu":
        return SELU_LAMBDA * np.where(x > 0, x, SELU_ALPHA * np.expm1(x))
    if kind == "gelu":
        # Exact Gaussian-CDF form, not the tanh approximation.
        return x * 0.5 * (1.0 + erf(x * _INV_SQRT2))
    if kind == "relu":
        return np.maximum(x, 0.0)
    raise ValueError(f"unknown activation {kind!r}; expected one of {ACTIVATIONS}")


def activation_grad(kind: str, x):
    """Analytic derivative of :func:`activation` at ``x``."""
    x = np.asarray(x, dtype=np.float64)
    if kind == "silu":
        s = sigmoid(x)
        return s * (1.0 + x * (1.0 - s))
    if kind == "selu":
        # At x == 0 the (x <= 0) branch applies, matching activation().
        return SELU_LAMBDA * np.where(x > 0, 1.0, SELU_ALPHA * np.exp(x))
    if kind == "gelu":
        cdf = 0.5 * (1.0 + erf(x * _INV_SQRT2))
        pdf = _INV_SQRT2PI * np.exp(-0.5 * x * x)
        return cdf + x * pdf
    if kind == "relu":
        return np.where(x > 0, 1.0, 0.0)
    raise ValueError(f"unknown activation {kind!r}; expected one of {ACTIVATIONS}")


def glorot_uniform(rows: int, cols: int, seed) -> np.ndarray:
    """Glorot/Xavier uniform init on [-L, L], L = sqrt(6 / (rows + cols)).

    ``seed`` is either an integer (a fresh Philox stream is keyed on it) or an
    existing ``numpy.random.Generator`` to draw from sequentially.
    """
    if rows < 1 or cols < 1:
        raise ValueError("glorot_uniform needs rows, cols >= 1")
    rng = seed if isinstance(seed, np.random.Generator) else make_rng(int(seed))
    limit = np.sqrt(6.0 / (rows + cols))
    return rng.uniform(-limit, limit, size=(rows, cols))


def softmax_rows(m: np.ndarray) -> np.ndarray:
    """Row-wise softmax with per-row max subtraction for stability."""
    m = np.asarray(m, dtype=np.float64)
    shifted = m - m.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


@dataclass
class AdamState:
    """Adam moments plus hyperparameters for one parameter set.

    ``lr_decay`` > 0 enables the optional inverse-time schedule
    lr_t = lr / (1 + lr_decay * t); the default 0 keeps the learning
    rate constant, with decoupled ``weight_decay`` handling the "decay"
    hyperparameter instead.
    """

    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    weight_decay: float = 0.0
    lr_decay: float = 0.0
    step_count: int = 0
    first_moment: Dict[str, np.ndarray] = field(default_factory=dict)
    second_moment: Dict[str, np.ndarray] = field(default_factory=dict)

    def _ensure_moments(self, params: Dict[str, np.ndarray]) -> None:
        for name, p in params.items():
            if name not in self.first_moment:
                self.first_moment[name] = np.zeros_like(p)
                self.second_moment[name] = np.zeros_like(p)


def adam_step(
    params: Dict[str, np.ndarray],
    grads: Dict[str, np.ndarray],
    state: AdamState,
) -> Dict[str, np.ndarray]:
    """One bias-corrected Adam update; returns new parameter arrays.

    Decoupled weight decay is applied as ``p -= lr_t * weight_decay * p``
    before the Adam delta. ``state`` is mutated in place (moments,
    step_count); the caller owns exclusivity.
    """
    state._ensure_moments(params)
    for name, g in grads.items():
        if name not in params:
            raise ShapeMismatch(f"gradient for unknown parameter {name!r}")
        if g.shape != params[name].shape:
            raise ShapeMismatch(
                f"parameter {name!r}: grad shape {g.shape} != param shape {params[name].shape}"
            )

    t = state.step_count + 1
    lr_t = state.lr / (1.0 + state.lr_decay * state.step_count)
    b1, b2 = state.beta1, state.beta2
    out: Dict[str, np.ndarray] = {}
    for name, p in params.items():
        g = grads[name]
        m = state.first_moment[name]
        v = state.second_moment[name]
        m[:] = b1 * m + (1.0 - b1) * g
        v[:] = b2 * v + (1.0 - b2) * (g * g)
        m_hat = m / (1.0 - b1**t)
        v_hat = v / (1.0 - b2**t)
        p_new = p * (1.0 - lr_t * state.weight_decay)
        p_new = p_new - lr_t * m_hat / (np.sqrt(v_hat) + state.epsilon)
        out[name] = p_new
    state.step_count = t
    return out


@dataclass
class GradCheckReport:
    max_rel_err: float
    num_checked: int
    tol: float
    worst_param: str
    worst_index: tuple

    @property
    def passed(self) -> bool:
        return self.max_rel_err <= self.tol


def finite_difference_check(
    loss_fn: Callable[[Dict[str, np.ndarray]], Tuple[float, Dict[str, np.ndarray]]],
    params: Dict[str, np.ndarray],
    h: float = 1e-6,
    tol: float = 1e-5,
    max_coords: int = 10_000,
    seed: int = 0,
) -> GradCheckReport:
    """Compare analytic gradients against central differences.

    ``loss_fn(params)`` must deterministically return ``(value, grads)`` with
    ``grads`` shaped like ``params``. Every coordinate is probed unless the
    total parameter count exceeds ``max_coords``, in which case a seeded
    random subsample of that size is used. The relative error denominator is
    floored at 1 so near-zero gradients are compared absolutely.
    """
    if not (1e-7 <= h <= 1e-4):
        raise ValueError(f"h={h} outside [1e-7, 1e-4]")
    _, analytic = loss_fn(params)

    coords = [
        (name, idx)
        for name in sorted(params)
        for idx in np.ndindex(params[name].shape)
    ]
    if len(coords) > max_coords:
        rng = make_rng(seed, stream=0xFD)
        chosen = rng.choice(len(coords), size=max_coords, replace=False)
        coords = [coords[i] for i in sorted(chosen)]

    work = {name: p.copy() for name, p in params.items()}
    max_rel = 0.0
    worst = (coords[0][0], coords[0][1]) if coords else ("", ())
    for name, idx in coords:
        orig = work[name][idx]
        work[name][idx] = orig + h
        up, _ = loss_fn(work)
        work[name][idx] = orig - h
        down, _ = loss_fn(work)
        work[name][idx] = orig
        numeric = (up - down) / (2.0 * h)
        a = analytic[name][idx]
        rel = abs(a - numeric) / max(1.0, abs(a), abs(numeric))
        if rel > max_rel:
            max_rel = rel
            worst = (name, idx)
    return GradCheckReport(
        max_rel_err=max_rel,
        num_checked=len(coords),
        tol=tol,
        worst_param=worst[0],
        worst_index=worst[1],
    )
