"""Synthetic planted-partition feature fields with known ground truth.

Each instance plants a rectangular foreground region on the patch grid,
draws per-patch features near one of two orthogonal unit centroids with
Gaussian coordinate noise, and reports the true patch labels plus the
pixel-level mask (patch labels replicated into patch_size blocks). Used as
the verification oracle for the whole training pipeline.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .graph import PatchFeatureGrid
from .nn import make_rng
from .pipeline import SegmentationMask

_SYNTH_STREAM = 0x533


@dataclass
class PlantedInstance:
    features: PatchFeatureGrid
    patch_labels: np.ndarray  # (grid_h, grid_w), 1 = foreground
    pixel_mask: SegmentationMask


def make_planted_instance(
    seed: int,
    grid_h: int = 28,
    grid_w: int = 28,
    dim: int = 16,
    noise: float = 0.05,
    patch_size: int = 8,
) -> PlantedInstance:
    """Build one instance; the foreground rectangle never touches the border."""
    rng = make_rng(seed, stream=_SYNTH_STREAM)

    # Random orthonormal centroid pair via Gram-Schmidt.
    c_bg = rng.normal(size=dim)
    c_bg /= np.linalg.norm(c_bg)
    c_fg = rng.normal(size=dim)
    c_fg -= (c_fg @ c_bg) * c_bg
    c_fg /= np.linalg.norm(c_fg)

    # Sides span 50-80% of the grid so the two planted clusters stay roughly
    # balanced; heavily unbalanced clusters sit in tension with the collapse
    # regularizer and converge to softer assignments.
    margin = 2 if min(grid_h, grid_w) >= 12 else 1
    height = int(rng.integers(grid_h // 2, min((grid_h * 4) // 5, grid_h - 2 * margin) + 1))
    width = int(rng.integers(grid_w // 2, min((grid_w * 4) // 5, grid_w - 2 * margin) + 1))
    top = int(rng.integers(margin, grid_h - margin - height + 1))
    left = int(rng.integers(margin, grid_w - margin - width + 1))

    labels = np.zeros((grid_h, grid_w), dtype=np.int64)
    labels[top : top + height, left : left + width] = 1

    flat = labels.reshape(-1)
    centroids = np.where(flat[:, None] == 1, c_fg[None, :], c_bg[None, :])
    data = centroids + noise * rng.normal(size=(grid_h * grid_w, dim))

    features = PatchFeatureGrid(
        grid_h=grid_h,
        grid_w=grid_w,
        dim=dim,
        data=data,
        source_image_w=grid_w * patch_size,
        source_image_h=grid_h * patch_size,
        patch_size=patch_size,
    )
    pixel_mask = SegmentationMask(
        width=grid_w * patch_size,
        height=grid_h * patch_size,
        pixels=np.kron(labels, np.ones((patch_size, patch_size))).astype(np.uint8),
    )
    return PlantedInstance(features=features, patch_labels=labels, pixel_mask=pixel_mask)


def random_simple_graph(seed: int, max_nodes: int = 8):
    """Small random simple graph with at least one edge (property-test helper)."""
    from .graph import PatchGraph

    rng = make_rng(seed, stream=0x617)
    n = int(rng.integers(2, max_nodes + 1))
    p = float(rng.uniform(0.2, 0.9))
    adj = (rng.uniform(size=(n, n)) < p).astype(np.float64)
    adj = np.triu(adj, k=1)
    adj = adj + adj.T
    if adj.sum() == 0:
        i, j = 0, int(rng.integers(1, n))
        adj[i, j] = adj[j, i] = 1.0
    degrees = adj.sum(axis=1).astype(np.int64)
    return PatchGraph(
        n=n, adjacency=adj, degrees=degrees, edge_count=float(adj.sum()) / 2.0
    )
