"""Per-image training loop and mask production.

Each image gets a fresh Glorot-initialized model trained full-batch on its
own patch graph (one Adam step per epoch; there are no minibatches with a
single image). The trained soft assignment becomes a pixel mask via
foreground selection, bilinear upsampling, thresholding, and optional
color-guided edge smoothing.
"""

from __future__ import annotations

from dataclasses import dataclass, field, asdict
from typing import List, Optional, Tuple

import numpy as np

from . import graph as graphmod
from . import loss as lossmod
from . import model as modelmod
from . import nn
from .errors import DimensionMismatch, DivergedLoss, ShapeMismatch

REFINE_MODES = ("none", "smooth")

REFINE_ITERATIONS = 5
REFINE_COLOR_SIGMA = 30.0  # 8-bit channel units


@dataclass(frozen=True)
class TrainConfig:
    tau: float = 0.5
    epochs: int = 100
    lr: float = 1e-3
    weight_decay: float = 1e-2
    k: int = 2
    activation: str = "silu"
    seed: int = 0
    restarts: int = 1
    refine: str = "smooth"
    lr_decay: float = 0.0
    keep_self_loops: bool = False
    hidden_dim: int = modelmod.HIDDEN_DIM

    def __post_init__(self):
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.lr <= 0:
            raise ValueError("lr must be > 0")
        if not (-1.0 < self.tau < 1.0):
            raise ValueError("tau must lie in (-1, 1)")
        if self.k < 2:
            raise ValueError("k must be >= 2")
        if self.restarts < 1:
            raise ValueError("restarts must be >= 1")
        if self.refine not in REFINE_MODES:
            raise ValueError(f"refine must be one of {REFINE_MODES}")
        if self.activation not in nn.ACTIVATIONS:
            raise ValueError(f"activation must be one of {nn.ACTIVATIONS}")

    def snapshot(self) -> dict:
        return asdict(self)


@dataclass
class SegmentationMask:
    """Binary mask at original image resolution (1 = foreground)."""

    width: int
    height: int
    pixels: np.ndarray
    provenance: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.pixels.shape != (self.height, self.width):
            raise DimensionMismatch(
                f"pixels shape {self.pixels.shape} != ({self.height}, {self.width})"
            )
        vals = np.unique(self.pixels)
        if not np.isin(vals, (0, 1)).all():
            raise ValueError(f"mask values must be 0/1, found {vals}")


@dataclass
class TrainResult:
    assignment: np.ndarray
    params: modelmod.ModelParams
    loss_trace: List[float]
    graph: graphmod.PatchGraph
    restart_index: int
    adam_steps: int

    @property
    def initial_loss(self) -> float:
        return self.loss_trace[0]

    @property
    def final_loss(self) -> float:
        return self.loss_trace[-1]


def _train_once(
    g: graphmod.PatchGraph,
    a_hat: np.ndarray,
    x: np.ndarray,
    cfg: TrainConfig,
    rng: np.random.Generator,
) -> Tuple[np.ndarray, modelmod.ModelParams, List[float], int]:
    params = modelmod.init_params(
        rng,
        in_dim=x.shape[1],
        hidden=cfg.hidden_dim,
        k=cfg.k,
        activation_kind=cfg.activation,
    )
    state = nn.AdamState(
        lr=cfg.lr, weight_decay=cfg.weight_decay, lr_decay=cfg.lr_decay
    )
    trace: List[float] = []
    for epoch in range(cfg.epochs):
        c, cache = modelmod.forward(params, a_hat, x)
        value = lossmod.loss_value(g, c)
        if not np.isfinite(value):
            raise DivergedLoss(epoch, value)
        trace.append(value)
        grads = modelmod.backward(cache, lossmod.loss_grad(g, c))
        params = params.replace(nn.adam_step(params.to_dict(), grads, state))
    c, _ = modelmod.forward(params, a_hat, x)
    final = lossmod.loss_value(g, c)
    if not np.isfinite(final):
        raise DivergedLoss(cfg.epochs, final)
    trace.append(final)
    return c, params, trace, state.step_count


def train_image(f: graphmod.PatchFeatureGrid, cfg: TrainConfig) -> TrainResult:
    """Cluster one image's patches under the modularity objective.

    The loss trace has epochs + 1 entries: the loss evaluated before each
    Adam step, then the final loss of the returned assignment. With
    restarts > 1, independent Philox streams (seed, restart) are run and
    the lowest final loss wins.

    Raises EmptyGraph (via build_adjacency) when tau isolates everything,
    DivergedLoss when any epoch yields a non-finite value.
    """
    fn = graphmod.normalize_features(f)
    g = graphmod.build_adjacency(fn, cfg.tau, keep_self_loops=cfg.keep_self_loops)
    a_hat = graphmod.normalized_adjacency(g)
    x = fn.data

    best: Optional[TrainResult] = None
    for r in range(cfg.restarts):
        rng = nn.make_rng(cfg.seed, stream=r)
        c, params, trace, steps = _train_once(g, a_hat, x, cfg, rng)
        if best is None or trace[-1] < best.final_loss:
            best = TrainResult(
                assignment=c,
                params=params,
                loss_trace=trace,
                graph=g,
                restart_index=r,
                adam_steps=steps,
            )
    return best


def segment_image(
    f: graphmod.PatchFeatureGrid,
    cfg: TrainConfig,
    image: Optional[np.ndarray] = None,
) -> Tuple[SegmentationMask, TrainResult]:
    """Full mask production for one image.

    Trains on the patch graph, picks the foreground cluster, upsamples the
    foreground probability to the source image size, and (when configured)
    smooths edges guided by ``image``. The mask carries a provenance dict
    with the config snapshot and final loss.
    """
    result = train_image(f, cfg)
    labels = modelmod.hard_labels(result.assignment)
    fg = select_foreground(labels, f.grid_h, f.grid_w)
    provenance = {
        "config": cfg.snapshot(),
        "foreground_cluster": fg,
        "initial_loss": result.initial_loss,
        "final_loss": result.final_loss,
        "restart_index": result.restart_index,
    }
    mask = upsample_mask(
        result.assignment, fg, f.grid_h, f.grid_w,
        f.source_image_w, f.source_image_h, provenance,
    )
    if cfg.refine == "smooth":
        mask = refine_edges(mask, image, mode="smooth")
    return mask, result


def select_foreground(labels: np.ndarray, grid_h: int, grid_w: int) -> int:
    """Pick which of the two clusters is the object.

    The cluster whose own patches lie on the grid border in the smaller
    proportion is foreground (objects rarely dominate image borders). An
    empty cluster counts as border fraction 0. Ties: fewer total patches,
    then cluster 1.
    """
    labels = np.asarray(labels).reshape(grid_h, grid_w)
    border = np.zeros((grid_h, grid_w), dtype=bool)
    border[0, :] = border[-1, :] = True
    border[:, 0] = border[:, -1] = True

    def border_fraction(cluster: int) -> float:
        total = int(np.sum(labels == cluster))
        if total == 0:
            return 0.0
        return int(np.sum(border & (labels == cluster))) / total

    f0, f1 = border_fraction(0), border_fraction(1)
    if f0 != f1:
        return 0 if f0 < f1 else 1
    n0, n1 = int(np.sum(labels == 0)), int(np.sum(labels == 1))
    if n0 != n1:
        return 0 if n0 < n1 else 1
    return 1


def bilinear_upsample(
    values: np.ndarray, out_h: int, out_w: int
) -> np.ndarray:
    """Resample a 2D field with half-pixel-center bilinear interpolation.

    Output pixel (r, c) samples source coordinate
    ((r + 0.5) * in/out - 0.5), clamped to the valid range, matching the
    common image-resize convention (each source cell is centered on its
    own block of output pixels).
    """
    in_h, in_w = values.shape

    def axis_coords(out_n: int, in_n: int):
        src = (np.arange(out_n) + 0.5) * (in_n / out_n) - 0.5
        src = np.clip(src, 0.0, in_n - 1.0)
        lo = np.floor(src).astype(np.int64)
        lo = np.minimum(lo, in_n - 1)
        hi = np.minimum(lo + 1, in_n - 1)
        frac = src - lo
        return lo, hi, frac

    r0, r1, rf = axis_coords(out_h, in_h)
    c0, c1, cf = axis_coords(out_w, in_w)
    top = values[np.ix_(r0, c0)] * (1 - cf) + values[np.ix_(r0, c1)] * cf
    bot = values[np.ix_(r1, c0)] * (1 - cf) + values[np.ix_(r1, c1)] * cf
    return top * (1 - rf[:, None]) + bot * rf[:, None]


def upsample_mask(
    c: np.ndarray,
    fg: int,
    grid_h: int,
    grid_w: int,
    out_w: int,
    out_h: int,
    provenance: Optional[dict] = None,
) -> SegmentationMask:
    """Upsample the foreground-probability channel to pixels, threshold at 0.5.

    Pixels with interpolated probability >= 0.5 become foreground. Any
    target size is allowed; it need not be a multiple of the grid.
    """
    probs = np.asarray(c, dtype=np.float64)[:, fg].reshape(grid_h, grid_w)
    up = bilinear_upsample(probs, out_h, out_w)
    pixels = (up >= 0.5).astype(np.uint8)
    return SegmentationMask(
        width=out_w, height=out_h, pixels=pixels, provenance=dict(provenance or {})
    )


def refine_edges(
    mask: SegmentationMask, image: Optional[np.ndarray], mode: str = "smooth"
) -> SegmentationMask:
    """Color-guided majority smoothing of the mask boundary.

    Mode "smooth" runs 5 iterations of weighted majority voting over each
    pixel's 3x3 neighborhood: the eight neighbors vote (the center pixel
    does not), each vote weighted by exp(-||color difference||^2 /
    (2 * sigma_c^2)) with sigma_c = 30 in 8-bit channel units. A pixel
    becomes foreground when the foreground vote strictly exceeds half the
    total weight. Mode "none" returns the mask unchanged. ``image=None``
    smooths with uniform weights (plain majority voting).
    """
    if mode == "none":
        return mask
    if mode != "smooth":
        raise ValueError(f"refine mode must be one of {REFINE_MODES}")
    h, w = mask.height, mask.width
    if image is not None:
        image = np.asarray(image)
        if image.shape[:2] != (h, w):
            raise DimensionMismatch(
                f"image shape {image.shape[:2]} != mask shape {(h, w)}"
            )
        if image.ndim != 3 or image.shape[2] != 3:
            raise ShapeMismatch(f"guide image must be HxWx3, got {image.shape}")
        img = image.astype(np.float64)

    m = mask.pixels.astype(np.float64)
    inv_two_sigma2 = 1.0 / (2.0 * REFINE_COLOR_SIGMA**2)
    for _ in range(REFINE_ITERATIONS):
        vote = np.zeros((h, w))
        total = np.zeros((h, w))
        for dr in (-1, 0, 1):
            for dc in (-1, 0, 1):
                if dr == 0 and dc == 0:
                    continue
                rs = slice(max(dr, 0), h + min(dr, 0))
                rd = slice(max(-dr, 0), h + min(-dr, 0))
                cs = slice(max(dc, 0), w + min(dc, 0))
                cd = slice(max(-dc, 0), w + min(-dc, 0))
                if image is None:
                    wgt = 1.0
                else:
                    diff = img[rs, cs] - img[rd, cd]
                    wgt = np.exp(-np.sum(diff * diff, axis=2) * inv_two_sigma2)
                vote[rd, cd] += wgt * m[rs, cs]
                total[rd, cd] += wgt
        m = (vote > 0.5 * total).astype(np.float64)

    return SegmentationMask(
        width=w,
        height=h,
        pixels=m.astype(np.uint8),
        provenance=dict(mask.provenance),
    )
