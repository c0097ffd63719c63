"""Patch-feature extraction from pretrained self-distilled ViTs.

Writes per-patch features (key/query/value projections of the final
attention block, class token excluded) in the binary feature-file format
consumed by the segmentation pipeline.
"""

__version__ = "0.1.0"

from .errors import MissingCheckpoint, UnreadableImage
from .extract import extract

__all__ = ["extract", "MissingCheckpoint", "UnreadableImage", "__version__"]
