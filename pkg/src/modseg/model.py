"""Fixed architecture: two GCN layers, a linear head, row softmax.

Forward:   H1 = act(A_hat X W0 + b0)
           H2 = act(A_hat H1 W1 + b1)
           C  = softmax_rows(H2 W_head + b_head)

The backward pass is hand-derived for exactly this shape; no autodiff. The
production widths are in_dim=384 -> hidden=64 -> k, but every routine works
for arbitrary consistent shapes so gradient checks can run on small ones.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Dict, Tuple

import numpy as np

from . import nn
from .errors import ShapeMismatch

IN_DIM = 384
HIDDEN_DIM = 64


@dataclass
class ModelParams:
    """GCN and head weights. Biases exist and start at zero."""

    W0: np.ndarray
    W1: np.ndarray
    W_head: np.ndarray
    b0: np.ndarray
    b1: np.ndarray
    b_head: np.ndarray
    activation_kind: str = "silu"

    def __post_init__(self):
        in_dim, hidden = self.W0.shape
        k = self.W_head.shape[1]
        expect = {
            "W1": (hidden, hidden),
            "W_head": (hidden, k),
            "b0": (hidden,),
            "b1": (hidden,),
            "b_head": (k,),
        }
        for name, shape in expect.items():
            if getattr(self, name).shape != shape:
                raise ShapeMismatch(
                    f"{name} shape {getattr(self, name).shape} != {shape}"
                )
        if self.activation_kind not in nn.ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation_kind!r}")

    @property
    def k(self) -> int:
        return self.W_head.shape[1]

    def to_dict(self) -> Dict[str, np.ndarray]:
        return {
            "W0": self.W0,
            "W1": self.W1,
            "W_head": self.W_head,
            "b0": self.b0,
            "b1": self.b1,
            "b_head": self.b_head,
        }

    def replace(self, arrays: Dict[str, np.ndarray]) -> "ModelParams":
        return ModelParams(activation_kind=self.activation_kind, **arrays)


def init_params(
    seed,
    in_dim: int = IN_DIM,
    hidden: int = HIDDEN_DIM,
    k: int = 2,
    activation_kind: str = "silu",
) -> ModelParams:
    """Glorot-uniform weights, zero biases, drawn in a fixed order.

    ``seed`` is an int or a Generator (see nn.make_rng); the three weight
    matrices are drawn sequentially from the same stream.
    """
    rng = seed if isinstance(seed, np.random.Generator) else nn.make_rng(int(seed))
    return ModelParams(
        W0=nn.glorot_uniform(in_dim, hidden, rng),
        W1=nn.glorot_uniform(hidden, hidden, rng),
        W_head=nn.glorot_uniform(hidden, k, rng),
        b0=np.zeros(hidden),
        b1=np.zeros(hidden),
        b_head=np.zeros(k),
        activation_kind=activation_kind,
    )


@dataclass
class ForwardCache:
    """Intermediates needed by backward(); holds references, not copies."""

    a_hat: np.ndarray
    params: ModelParams
    ax: np.ndarray
    z1: np.ndarray
    h1: np.ndarray
    ah1: np.ndarray
    z2: np.ndarray
    h2: np.ndarray
    c: np.ndarray


def forward(
    params: ModelParams, a_hat: np.ndarray, x: np.ndarray
) -> Tuple[np.ndarray, ForwardCache]:
    """Run the model; returns the n x k soft assignment and the cache."""
    n = a_hat.shape[0]
    if a_hat.shape != (n, n):
        raise ShapeMismatch(f"A_hat must be square, got {a_hat.shape}")
    if x.shape[0] != n:
        raise ShapeMismatch(f"X has {x.shape[0]} rows, A_hat has {n}")
    if x.shape[1] != params.W0.shape[0]:
        raise ShapeMismatch(
            f"X dim {x.shape[1]} != W0 input dim {params.W0.shape[0]}"
        )
    act = params.activation_kind
    ax = a_hat @ x
    z1 = ax @ params.W0 + params.b0
    h1 = nn.activation(act, z1)
    ah1 = a_hat @ h1
    z2 = ah1 @ params.W1 + params.b1
    h2 = nn.activation(act, z2)
    logits = h2 @ params.W_head + params.b_head
    c = nn.softmax_rows(logits)
    cache = ForwardCache(
        a_hat=a_hat, params=params, ax=ax, z1=z1, h1=h1, ah1=ah1, z2=z2, h2=h2, c=c
    )
    return c, cache


def backward(cache: ForwardCache, dc: np.ndarray) -> Dict[str, np.ndarray]:
    """Exact gradients of all parameters given dL/dC.

    Uses A_hat^T explicitly so nothing relies on A_hat being symmetric.
    """
    p = cache.params
    act = p.activation_kind
    c = cache.c
    if dc.shape != c.shape:
        raise ShapeMismatch(f"dL/dC shape {dc.shape} != C shape {c.shape}")

    # Softmax backward (row-wise): dZ = C * (dC - sum(dC * C, axis=1)).
    dlogits = c * (dc - np.sum(dc * c, axis=1, keepdims=True))

    d_w_head = cache.h2.T @ dlogits
    d_b_head = dlogits.sum(axis=0)
    dh2 = dlogits @ p.W_head.T

    dz2 = dh2 * nn.activation_grad(act, cache.z2)
    d_w1 = cache.ah1.T @ dz2
    d_b1 = dz2.sum(axis=0)
    dh1 = cache.a_hat.T @ (dz2 @ p.W1.T)

    dz1 = dh1 * nn.activation_grad(act, cache.z1)
    d_w0 = cache.ax.T @ dz1
    d_b0 = dz1.sum(axis=0)

    return {
        "W0": d_w0,
        "W1": d_w1,
        "W_head": d_w_head,
        "b0": d_b0,
        "b1": d_b1,
        "b_head": d_b_head,
    }


def hard_labels(c: np.ndarray) -> np.ndarray:
    """Per-row argmax; ties break toward the lower cluster index."""
    return np.argmax(np.asarray(c), axis=1)
