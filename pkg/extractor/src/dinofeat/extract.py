"""Image -> per-patch feature file.

Preprocessing follows the checkpoints' canonical recipe: resize to 224x224
(PIL bilinear), scale to [0, 1], normalize with the ImageNet statistics the
backbones were trained with. Both the recipe and the checkpoint hash are
recorded in a JSON sidecar next to every output.
"""

from __future__ import annotations

import json
import logging
import struct
from pathlib import Path
from typing import Optional

import numpy as np
import torch
from PIL import Image, UnidentifiedImageError

from .checkpoint import load_model
from .errors import UnreadableImage
from .vit import VARIANTS, VisionTransformer

log = logging.getLogger(__name__)

IMAGENET_MEAN = (0.485, 0.456, 0.406)
IMAGENET_STD = (0.229, 0.224, 0.225)

FEATURE_MAGIC = b"UNSG"
FEATURE_VERSION = 1
HEADER_STRUCT = struct.Struct("<4s7I")


def write_feature_file(
    path,
    features: np.ndarray,
    grid_h: int,
    grid_w: int,
    source_w: int,
    source_h: int,
    patch_size: int,
) -> None:
    """Serialize features in the segmentation pipeline's binary format."""
    n, dim = features.shape
    if n != grid_h * grid_w:
        raise ValueError(f"{n} rows != {grid_h}x{grid_w} grid")
    header = HEADER_STRUCT.pack(
        FEATURE_MAGIC, FEATURE_VERSION, grid_h, grid_w, dim,
        source_w, source_h, patch_size,
    )
    payload = np.ascontiguousarray(features, dtype="<f4").tobytes()
    Path(path).write_bytes(header + payload)


def load_image_rgb(path) -> Image.Image:
    try:
        img = Image.open(path)
        img.load()
    except (UnidentifiedImageError, OSError) as e:
        raise UnreadableImage(f"{path}: {e}") from e
    return img.convert("RGB")


def preprocess(img: Image.Image, size: int) -> torch.Tensor:
    resized = img.resize((size, size), Image.BILINEAR)
    arr = np.asarray(resized, dtype=np.float32) / 255.0
    arr = (arr - np.array(IMAGENET_MEAN, dtype=np.float32)) / np.array(
        IMAGENET_STD, dtype=np.float32
    )
    return torch.from_numpy(arr.transpose(2, 0, 1)).unsqueeze(0)


def extract(
    image_path,
    out_path,
    model_variant: str = "dino_vits8",
    layer: str = "key",
    checkpoint: Optional[str] = None,
    cache_dir=None,
    model: Optional[VisionTransformer] = None,
    checkpoint_sha256: Optional[str] = None,
) -> Path:
    """Extract per-patch features for one image and write the feature file.

    A preloaded ``model`` (with its ``checkpoint_sha256``) can be passed in
    to amortize weight loading over a batch. Returns the output path; a JSON
    sidecar with provenance lands next to it.
    """
    if model is None:
        model, checkpoint_sha256 = load_model(model_variant, checkpoint, cache_dir)
    spec = VARIANTS[model_variant]
    img = load_image_rgb(image_path)
    source_w, source_h = img.size
    pixels = preprocess(img, spec.image_size)
    with torch.no_grad():
        feats = model.patch_features(pixels, layer=layer)
    features = feats[0].numpy().astype(np.float32)

    out_path = Path(out_path)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    write_feature_file(
        out_path, features,
        grid_h=spec.grid, grid_w=spec.grid,
        source_w=source_w, source_h=source_h,
        patch_size=spec.patch_size,
    )
    sidecar = {
        "source_image": str(image_path),
        "model_variant": model_variant,
        "layer": layer,
        "checkpoint_sha256": checkpoint_sha256,
        "preprocess": {
            "resize": [spec.image_size, spec.image_size],
            "interpolation": "bilinear",
            "mean": list(IMAGENET_MEAN),
            "std": list(IMAGENET_STD),
        },
        "grid": [spec.grid, spec.grid],
        "feature_dim": int(features.shape[1]),
    }
    out_path.with_suffix(".json").write_text(json.dumps(sidecar, indent=2))

    _log_horizontal_coherence(features, spec.grid)
    return out_path


def _log_horizontal_coherence(features: np.ndarray, grid: int) -> None:
    """Sanity heuristic, logged only: horizontally adjacent patches should
    look alike on smooth images."""
    f = features.reshape(grid, grid, -1)
    a, b = f[:, :-1, :], f[:, 1:, :]
    num = (a * b).sum(-1)
    denom = np.linalg.norm(a, axis=-1) * np.linalg.norm(b, axis=-1)
    with np.errstate(invalid="ignore", divide="ignore"):
        cos = num / denom
    log.info("mean horizontal-neighbor cosine similarity: %.3f", float(np.nanmean(cos)))
