"""Checkpoint acquisition: explicit path, local cache, or first-use download.

Integrity is pinned trust-on-first-use: the sha256 of a checkpoint is
recorded next to it in the cache the first time it is seen and verified on
every later load. The hash also goes into each output's sidecar so results
stay attributable to an exact set of weights.
"""

from __future__ import annotations

import hashlib
import logging
import os
import urllib.error
import urllib.request
from pathlib import Path
from typing import Optional, Tuple

import torch

from .errors import ChecksumMismatch, MissingCheckpoint
from .vit import CHECKPOINT_URLS, VARIANTS, VisionTransformer

log = logging.getLogger(__name__)

OFFLINE_ENV = "DINOFEAT_OFFLINE"


def default_cache_dir() -> Path:
    base = os.environ.get("XDG_CACHE_HOME", os.path.join(os.path.expanduser("~"), ".cache"))
    return Path(base) / "dinofeat"


def sha256_of(path: Path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


def _verify_or_record(path: Path) -> str:
    actual = sha256_of(path)
    marker = path.with_suffix(path.suffix + ".sha256")
    if marker.exists():
        expected = marker.read_text().strip()
        if expected != actual:
            raise ChecksumMismatch(
                f"{path}: sha256 {actual} does not match recorded {expected}"
            )
    else:
        marker.write_text(actual + "\n")
        log.info("recorded checkpoint hash %s for %s", actual[:12], path.name)
    return actual


def _download(url: str, dest: Path) -> None:
    if os.environ.get(OFFLINE_ENV):
        raise MissingCheckpoint(
            f"checkpoint not cached and {OFFLINE_ENV} is set; expected at {dest}"
        )
    dest.parent.mkdir(parents=True, exist_ok=True)
    tmp = dest.with_suffix(dest.suffix + ".part")
    log.info("downloading %s", url)
    try:
        with urllib.request.urlopen(url, timeout=60) as resp, open(tmp, "wb") as out:
            while True:
                chunk = resp.read(1 << 20)
                if not chunk:
                    break
                out.write(chunk)
        tmp.rename(dest)
    except (urllib.error.URLError, OSError) as e:
        tmp.unlink(missing_ok=True)
        raise MissingCheckpoint(f"download of {url} failed: {e}") from e


def resolve_checkpoint(
    variant: str,
    checkpoint: Optional[str] = None,
    cache_dir: Optional[Path] = None,
) -> Tuple[Path, str]:
    """Return (path, sha256) of the checkpoint to use for ``variant``."""
    if checkpoint is not None:
        path = Path(checkpoint)
        if not path.is_file():
            raise MissingCheckpoint(f"checkpoint file {path} does not exist")
        return path, _verify_or_record(path)
    cache_dir = Path(cache_dir) if cache_dir else default_cache_dir()
    url = CHECKPOINT_URLS[variant]
    path = cache_dir / url.rsplit("/", 1)[-1]
    if not path.is_file():
        _download(url, path)
    return path, _verify_or_record(path)


def load_model(
    variant: str,
    checkpoint: Optional[str] = None,
    cache_dir: Optional[Path] = None,
) -> Tuple[VisionTransformer, str]:
    """Build the model and load weights; returns (model, checkpoint sha256)."""
    if variant not in VARIANTS:
        raise ValueError(f"unknown variant {variant!r}; expected one of {sorted(VARIANTS)}")
    path, digest = resolve_checkpoint(variant, checkpoint, cache_dir)
    state = torch.load(path, map_location="cpu", weights_only=True)
    if isinstance(state, dict) and "state_dict" in state:
        state = state["state_dict"]
    model = VisionTransformer(VARIANTS[variant])
    missing, unexpected = model.load_state_dict(state, strict=False)
    if missing:
        raise MissingCheckpoint(f"{path}: missing parameters {sorted(missing)[:5]}...")
    if unexpected:
        log.debug("ignoring %d unexpected checkpoint entries (e.g. %s)",
                  len(unexpected), sorted(unexpected)[:3])
    model.eval()
    return model, digest
