"""Unsupervised binary image segmentation by modularity-driven clustering
of pretrained patch features with a per-image shallow GCN."""

__version__ = "0.1.0"

from .errors import (
    BadMagic,
    BadVersion,
    CorruptImage,
    DimensionMismatch,
    DivergedLoss,
    EmptyDataset,
    EmptyGraph,
    ModsegError,
    NonFinitePayload,
    ShapeMismatch,
    TruncatedPayload,
    UnsupportedFormat,
    ZeroFeatureRow,
)
from .graph import PatchFeatureGrid, PatchGraph

__all__ = [
    "__version__",
    "ModsegError",
    "ZeroFeatureRow",
    "EmptyGraph",
    "ShapeMismatch",
    "DimensionMismatch",
    "DivergedLoss",
    "BadMagic",
    "BadVersion",
    "TruncatedPayload",
    "NonFinitePayload",
    "UnsupportedFormat",
    "CorruptImage",
    "EmptyDataset",
    "PatchFeatureGrid",
    "PatchGraph",
]
