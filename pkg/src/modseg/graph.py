"""Patch graph construction and modularity structures.

Nodes are image patches; edges join patch pairs whose feature dot product
exceeds a threshold tau. The modularity matrix B = A - d d^T / 2m is never
materialized: every consumer uses the factored form (sparse-friendly A plus
a rank-1 degree correction), which is mathematically identical and keeps
loss evaluation at O(n*k).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import EmptyGraph, ShapeMismatch, ZeroFeatureRow


@dataclass(frozen=True)
class PatchFeatureGrid:
    """Per-patch feature vectors laid out on a grid_h x grid_w lattice.

    ``data`` has one row per patch in raster order (left-to-right,
    top-to-bottom) and is always float64 in memory; feature files store
    float32 and are widened on load.
    """

    grid_h: int
    grid_w: int
    dim: int
    data: np.ndarray
    source_image_w: int
    source_image_h: int
    patch_size: int

    def __post_init__(self):
        if self.grid_h < 1 or self.grid_w < 1 or self.dim < 1:
            raise ValueError("grid_h, grid_w, dim must all be >= 1")
        if self.data.shape != (self.grid_h * self.grid_w, self.dim):
            raise ShapeMismatch(
                f"data shape {self.data.shape} != ({self.grid_h * self.grid_w}, {self.dim})"
            )
        if not np.isfinite(self.data).all():
            raise ValueError("feature data contains NaN/Inf")

    @property
    def n(self) -> int:
        return self.grid_h * self.grid_w

    def with_data(self, data: np.ndarray) -> "PatchFeatureGrid":
        return PatchFeatureGrid(
            grid_h=self.grid_h,
            grid_w=self.grid_w,
            dim=self.dim,
            data=data,
            source_image_w=self.source_image_w,
            source_image_h=self.source_image_h,
            patch_size=self.patch_size,
        )


@dataclass(frozen=True)
class PatchGraph:
    """Simple undirected patch graph: 0/1 adjacency, degrees, edge count.

    ``edge_count`` is half the adjacency sum; it is integer-valued for the
    default simple graph and may be half-integer in self-loop-literal mode.
    """

    n: int
    adjacency: np.ndarray
    degrees: np.ndarray
    edge_count: float

    def __post_init__(self):
        if self.adjacency.shape != (self.n, self.n):
            raise ShapeMismatch(f"adjacency shape {self.adjacency.shape} != ({self.n}, {self.n})")


def normalize_features(f: PatchFeatureGrid) -> PatchFeatureGrid:
    """Scale every feature row to unit Euclidean norm.

    Raises ZeroFeatureRow for any row whose norm is below 1e-12; such a row
    carries no direction and would poison every similarity it touches.
    """
    norms = np.linalg.norm(f.data, axis=1)
    bad = np.nonzero(norms < 1e-12)[0]
    if bad.size:
        raise ZeroFeatureRow(int(bad[0]), float(norms[bad[0]]))
    return f.with_data(f.data / norms[:, None])


def build_adjacency(
    f: PatchFeatureGrid, tau: float, keep_self_loops: bool = False
) -> PatchGraph:
    """Threshold pairwise feature similarity into a 0/1 adjacency.

    A_ij = 1 iff f_i . f_j > tau (strict) and i != j. With unit rows the
    diagonal of f f^T is identically 1 and would always clear the threshold;
    it is stripped so the modularity structures see a simple graph.
    ``keep_self_loops=True`` keeps the raw thresholded diagonal instead
    (literal reading of the similarity rule; degrees and edge count then
    include self-loops).

    Raises EmptyGraph when no edge survives the threshold.
    """
    if not (-1.0 < tau < 1.0):
        raise ValueError(f"tau={tau} outside (-1, 1)")
    sim = f.data @ f.data.T
    adj = (sim > tau).astype(np.float64)
    if not keep_self_loops:
        np.fill_diagonal(adj, 0.0)
    degrees = adj.sum(axis=1).astype(np.int64)
    edge_count = float(adj.sum()) / 2.0
    if edge_count == 0.0:
        raise EmptyGraph(f"no similarity exceeds tau={tau}; lower the threshold")
    return PatchGraph(n=f.n, adjacency=adj, degrees=degrees, edge_count=edge_count)


def normalized_adjacency(g: PatchGraph) -> np.ndarray:
    """Symmetrically degree-normalized adjacency used for GCN aggregation.

    Identity self-loops are added first (when the diagonal does not already
    carry them) so every node retains its own feature and every renormalized
    degree is >= 1: returns D~^(-1/2) (A + I) D~^(-1/2).
    """
    a = g.adjacency
    if np.trace(a) == 0.0:
        a = a + np.eye(g.n)
    d = a.sum(axis=1)
    inv_sqrt = 1.0 / np.sqrt(d)
    return a * inv_sqrt[:, None] * inv_sqrt[None, :]


def modularity_quadratic(g: PatchGraph, c: np.ndarray) -> float:
    """Relaxed modularity (1/2m) Tr(C^T B C) in factored form.

    Expands to (1/2m) [Tr(C^T A C) - (1/2m) ||d^T C||^2]; for one-hot C this
    equals the pairwise partition modularity exactly.
    """
    if g.edge_count < 1:
        raise ValueError("graph must have at least one edge")
    c = np.asarray(c, dtype=np.float64)
    if c.shape[0] != g.n:
        raise ShapeMismatch(f"C has {c.shape[0]} rows, graph has {g.n} nodes")
    two_m = 2.0 * g.edge_count
    trace_term = float(np.sum((g.adjacency @ c) * c))
    dc = g.degrees.astype(np.float64) @ c
    return (trace_term - float(dc @ dc) / two_m) / two_m


def modularity_hard(g: PatchGraph, labels: np.ndarray) -> float:
    """Partition modularity by the literal pairwise sum.

    Q = (1/2m) sum_ij [A_ij - d_i d_j / 2m] delta(c_i, c_j). Quadratic in n
    and deliberately naive: this is the oracle modularity_quadratic is
    checked against.
    """
    labels = np.asarray(labels)
    if labels.shape != (g.n,):
        raise ShapeMismatch(f"labels shape {labels.shape} != ({g.n},)")
    two_m = 2.0 * g.edge_count
    d = g.degrees.astype(np.float64)
    # Accumulate the (integer-valued) edge and degree-product sums separately
    # so the all-in-one-cluster partition comes out exactly 0.
    edge_sum = 0.0
    null_sum = 0.0
    for i in range(g.n):
        for j in range(g.n):
            if labels[i] == labels[j]:
                edge_sum += g.adjacency[i, j]
                null_sum += d[i] * d[j]
    return (edge_sum - null_sum / two_m) / two_m


def one_hot(labels: np.ndarray, k: int) -> np.ndarray:
    """Encode integer labels in [0, k) as an n x k one-hot matrix."""
    labels = np.asarray(labels)
    out = np.zeros((labels.shape[0], k), dtype=np.float64)
    out[np.arange(labels.shape[0]), labels] = 1.0
    return out
