"""Bit-exact feature-file format, mask files, and dataset layout.

Feature file layout (all integers unsigned 32-bit little-endian):

    offset  0   magic   b"UNSG"
    offset  4   version (= 1)
    offset  8   grid_h
    offset 12   grid_w
    offset 16   dim
    offset 20   source_image_w
    offset 24   source_image_h
    offset 28   patch_size
    offset 32   payload: grid_h * grid_w * dim float32 little-endian,
                patch raster order (left-to-right, top-to-bottom)

An optional JSON sidecar (same stem, ``.json``) may carry extractor
provenance; core logic never parses it.
"""

from __future__ import annotations

import logging
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import List, Optional

import numpy as np
from PIL import Image, UnidentifiedImageError

from .errors import (
    BadMagic,
    BadVersion,
    CorruptImage,
    EmptyDataset,
    NonFinitePayload,
    TruncatedPayload,
    UnsupportedFormat,
)
from .graph import PatchFeatureGrid
from .pipeline import SegmentationMask

log = logging.getLogger(__name__)

MAGIC = b"UNSG"
VERSION = 1
HEADER_STRUCT = struct.Struct("<4s7I")
HEADER_SIZE = HEADER_STRUCT.size  # 32
FEATURE_SUFFIX = ".unsg"

_MAGIC_OFFSET = 0
_VERSION_OFFSET = 4
_PAYLOAD_OFFSET = HEADER_SIZE

MASK_SUFFIXES = (".png", ".pgm")


def write_features(f: PatchFeatureGrid, path) -> None:
    """Serialize a feature grid; float64 data narrows to float32 round-to-nearest."""
    payload = np.ascontiguousarray(f.data, dtype="<f4").tobytes()
    header = HEADER_STRUCT.pack(
        MAGIC,
        VERSION,
        f.grid_h,
        f.grid_w,
        f.dim,
        f.source_image_w,
        f.source_image_h,
        f.patch_size,
    )
    Path(path).write_bytes(header + payload)


def read_features(path) -> PatchFeatureGrid:
    """Parse a feature file, validating header and payload.

    Raises BadMagic / BadVersion / TruncatedPayload / NonFinitePayload with
    the offending byte offset.
    """
    raw = Path(path).read_bytes()
    if len(raw) < HEADER_SIZE:
        raise TruncatedPayload(HEADER_SIZE, len(raw), len(raw))
    magic, version, grid_h, grid_w, dim, src_w, src_h, patch = HEADER_STRUCT.unpack_from(
        raw, 0
    )
    if magic != MAGIC:
        raise BadMagic(f"magic {magic!r} != {MAGIC!r}", _MAGIC_OFFSET)
    if version != VERSION:
        raise BadVersion(f"version {version} != {VERSION}", _VERSION_OFFSET)
    if grid_h * grid_w * dim == 0:
        raise BadVersion(f"degenerate grid {grid_h}x{grid_w}x{dim}", 8)
    expected = grid_h * grid_w * dim * 4
    actual = len(raw) - HEADER_SIZE
    if actual != expected:
        raise TruncatedPayload(expected, actual, _PAYLOAD_OFFSET + min(actual, expected))
    data32 = np.frombuffer(raw, dtype="<f4", count=grid_h * grid_w * dim, offset=HEADER_SIZE)
    finite = np.isfinite(data32)
    if not finite.all():
        first_bad = int(np.nonzero(~finite)[0][0])
        raise NonFinitePayload(
            f"payload value #{first_bad} is not finite",
            _PAYLOAD_OFFSET + first_bad * 4,
        )
    data = data32.astype(np.float64).reshape(grid_h * grid_w, dim)
    return PatchFeatureGrid(
        grid_h=grid_h,
        grid_w=grid_w,
        dim=dim,
        data=data,
        source_image_w=src_w,
        source_image_h=src_h,
        patch_size=patch,
    )


def _open_image(path) -> Image.Image:
    try:
        img = Image.open(path)
        img.load()
        return img
    except UnidentifiedImageError as e:
        raise UnsupportedFormat(f"{path}: not a recognized image file") from e
    except OSError as e:
        raise CorruptImage(f"{path}: {e}") from e


def read_mask(path) -> SegmentationMask:
    """Load an 8-bit grayscale PNG/PGM as a binary mask (pixel > 127 -> 1)."""
    img = _open_image(path)
    if img.mode == "1":
        img = img.convert("L")
    if img.mode != "L":
        raise UnsupportedFormat(
            f"{path}: mode {img.mode!r} unsupported; convert to 8-bit grayscale"
        )
    arr = np.asarray(img, dtype=np.uint8)
    peak = int(arr.max()) if arr.size else 0
    if 0 < peak <= 127:
        log.warning(
            "%s: max pixel value %d < 128; mask reads as all background "
            "(expected 0/255 convention)", path, peak,
        )
    pixels = (arr > 127).astype(np.uint8)
    return SegmentationMask(width=arr.shape[1], height=arr.shape[0], pixels=pixels)


def write_mask(mask: SegmentationMask, path) -> None:
    """Write a binary mask as 8-bit grayscale (foreground 255, background 0)."""
    arr = (mask.pixels * 255).astype(np.uint8)
    Image.fromarray(arr, mode="L").save(path)


def read_image_rgb(path) -> np.ndarray:
    """Load an image as an HxWx3 uint8 RGB array (grayscale is replicated)."""
    img = _open_image(path)
    if img.mode != "RGB":
        img = img.convert("RGB")
    return np.asarray(img, dtype=np.uint8)


@dataclass(frozen=True)
class DatasetItem:
    name: str
    image_path: Path
    mask_path: Path
    features_path: Optional[Path]


@dataclass
class ScanResult:
    items: List[DatasetItem]
    skipped: List[str]


def scan_dataset(root) -> ScanResult:
    """Pair images with ground-truth masks (and optional features) by stem.

    Expects root/images/ and root/masks/; root/features/ is optional.
    Items are returned in lexicographic stem order; images without a mask
    are reported in ``skipped``. Raises EmptyDataset when nothing pairs up.
    """
    root = Path(root)
    images_dir = root / "images"
    masks_dir = root / "masks"
    features_dir = root / "features"
    if not images_dir.is_dir() or not masks_dir.is_dir():
        raise EmptyDataset(f"{root}: expected images/ and masks/ subdirectories")

    masks = {p.stem: p for p in sorted(masks_dir.iterdir()) if p.is_file()}
    features = (
        {p.stem: p for p in sorted(features_dir.glob(f"*{FEATURE_SUFFIX}"))}
        if features_dir.is_dir()
        else {}
    )
    items: List[DatasetItem] = []
    skipped: List[str] = []
    for img_path in sorted(images_dir.iterdir()):
        if not img_path.is_file():
            continue
        stem = img_path.stem
        if stem not in masks:
            log.warning("%s: no ground-truth mask, skipping", img_path.name)
            skipped.append(stem)
            continue
        items.append(
            DatasetItem(
                name=stem,
                image_path=img_path,
                mask_path=masks[stem],
                features_path=features.get(stem),
            )
        )
    if not items:
        raise EmptyDataset(f"{root}: no image/mask pairs found")
    return ScanResult(items=items, skipped=skipped)
