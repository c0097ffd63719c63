"""IoU / mIoU metrics and dataset-level evaluation.

Per class i, IoU_i = TP_i / (TP_i + FP_i + FN_i); mIoU averages the two
classes (background = 0, foreground = 1). A class absent from both masks
scores 1.0 (perfect agreement on "nothing there"). The dataset aggregate is
the unweighted mean of per-image mIoU.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Iterable, List, Optional, Tuple

import numpy as np

from .errors import DimensionMismatch, EmptyDataset
from .io import read_mask
from .pipeline import SegmentationMask


def _check_dims(pred: SegmentationMask, gt: SegmentationMask) -> None:
    if (pred.height, pred.width) != (gt.height, gt.width):
        raise DimensionMismatch(
            f"pred {pred.width}x{pred.height} vs gt {gt.width}x{gt.height}"
        )


def iou_per_class(pred: SegmentationMask, gt: SegmentationMask, cls: int) -> float:
    _check_dims(pred, gt)
    p = pred.pixels == cls
    g = gt.pixels == cls
    tp = int(np.sum(p & g))
    fp = int(np.sum(p & ~g))
    fn = int(np.sum(~p & g))
    denom = tp + fp + fn
    if denom == 0:
        return 1.0
    return tp / denom


def miou(pred: SegmentationMask, gt: SegmentationMask) -> float:
    return 0.5 * (iou_per_class(pred, gt, 0) + iou_per_class(pred, gt, 1))


def resize_mask_nearest(mask: SegmentationMask, out_w: int, out_h: int) -> SegmentationMask:
    """Nearest-neighbor resize; keeps the mask strictly binary."""
    if (mask.width, mask.height) == (out_w, out_h):
        return mask
    rows = np.minimum(
        ((np.arange(out_h) + 0.5) * mask.height / out_h).astype(np.int64),
        mask.height - 1,
    )
    cols = np.minimum(
        ((np.arange(out_w) + 0.5) * mask.width / out_w).astype(np.int64),
        mask.width - 1,
    )
    return SegmentationMask(
        width=out_w,
        height=out_h,
        pixels=mask.pixels[np.ix_(rows, cols)],
        provenance=dict(mask.provenance),
    )


@dataclass
class ImageScore:
    name: str
    miou: float
    iou_fg: float
    iou_bg: float


@dataclass
class EvalReport:
    config: dict
    images: List[ImageScore]
    aggregate_miou: float
    aggregate_iou_fg: float
    aggregate_iou_bg: float
    failures: List[dict] = field(default_factory=list)

    def to_json_dict(self) -> dict:
        return {
            "config": self.config,
            "images": [
                {
                    "name": s.name,
                    "miou": s.miou,
                    "iou_fg": s.iou_fg,
                    "iou_bg": s.iou_bg,
                }
                for s in self.images
            ],
            "aggregate_miou": self.aggregate_miou,
            "aggregate_iou_fg": self.aggregate_iou_fg,
            "aggregate_iou_bg": self.aggregate_iou_bg,
            "failures": self.failures,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_json_dict(), indent=2)


def _as_mask(m) -> SegmentationMask:
    if m is None:
        raise FileNotFoundError("no ground-truth mask")
    if isinstance(m, SegmentationMask):
        return m
    return read_mask(m)


def evaluate_dataset(
    pairs: Iterable[Tuple[str, object, object]],
    config: Optional[dict] = None,
) -> EvalReport:
    """Score (name, pred, gt) pairs; pred/gt are masks or mask-file paths.

    Predictions whose size differs from the ground truth are upsampled to
    the GT's native resolution (never the other way around). Per-image
    errors land in ``failures`` and are excluded from the aggregate.
    Raises EmptyDataset when given no pairs at all.
    """
    images: List[ImageScore] = []
    failures: List[dict] = []
    count = 0
    for name, pred_src, gt_src in pairs:
        count += 1
        try:
            gt = _as_mask(gt_src)
            pred = resize_mask_nearest(_as_mask(pred_src), gt.width, gt.height)
            images.append(
                ImageScore(
                    name=name,
                    miou=miou(pred, gt),
                    iou_fg=iou_per_class(pred, gt, 1),
                    iou_bg=iou_per_class(pred, gt, 0),
                )
            )
        except Exception as e:  # per-image failure policy: record, keep going
            failures.append({"name": name, "error": f"{type(e).__name__}: {e}"})
    if count == 0:
        raise EmptyDataset("no prediction/ground-truth pairs to evaluate")
    if images:
        agg = float(np.mean([s.miou for s in images]))
        agg_fg = float(np.mean([s.iou_fg for s in images]))
        agg_bg = float(np.mean([s.iou_bg for s in images]))
    else:
        agg = agg_fg = agg_bg = float("nan")
    return EvalReport(
        config=dict(config or {}),
        images=images,
        aggregate_miou=agg,
        aggregate_iou_fg=agg_fg,
        aggregate_iou_bg=agg_bg,
        failures=failures,
    )
