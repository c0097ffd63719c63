"""Report artifacts: CSV rows and figure rendering for an EvalReport.

The eval command writes three things next to each other: the JSON report,
a CSV with one row per image, and PNG figures (mIoU histogram plus a
sorted per-image breakdown). Figures use the Agg backend so rendering
works headless.
"""

from __future__ import annotations

import csv
from pathlib import Path
from typing import List

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt

from .eval import EvalReport


def write_csv(report: EvalReport, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["name", "miou", "iou_fg", "iou_bg"])
        for s in report.images:
            writer.writerow([s.name, f"{s.miou:.6f}", f"{s.iou_fg:.6f}", f"{s.iou_bg:.6f}"])
        writer.writerow([])
        writer.writerow(["aggregate_miou", f"{report.aggregate_miou:.6f}", "", ""])


def render_figures(report: EvalReport, out_dir, stem: str = "report") -> List[Path]:
    """Render the report figures; returns the written paths."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written: List[Path] = []
    if not report.images:
        return written
    mious = [s.miou for s in report.images]

    fig, ax = plt.subplots(figsize=(6, 4))
    ax.hist(mious, bins=min(20, max(5, len(mious))), range=(0.0, 1.0),
            color="#4878cf", edgecolor="white")
    ax.axvline(report.aggregate_miou, color="crimson", linestyle="--",
               label=f"mean = {report.aggregate_miou:.3f}")
    ax.set_xlabel("mIoU")
    ax.set_ylabel("images")
    ax.set_title("Per-image mIoU distribution")
    ax.legend()
    fig.tight_layout()
    hist_path = out_dir / f"{stem}_miou_hist.png"
    fig.savefig(hist_path, dpi=120)
    plt.close(fig)
    written.append(hist_path)

    order = sorted(report.images, key=lambda s: s.miou)
    names = [s.name for s in order]
    idx = range(len(order))
    fig, ax = plt.subplots(figsize=(max(6, 0.35 * len(order)), 4))
    ax.bar(idx, [s.iou_fg for s in order], width=0.4, align="edge",
           label="IoU foreground", color="#4878cf")
    ax.bar([i + 0.4 for i in idx], [s.iou_bg for s in order], width=0.4,
           align="edge", label="IoU background", color="#e1933c")
    ax.plot([i + 0.4 for i in idx], [s.miou for s in order], "k.", label="mIoU")
    ax.set_xticks([i + 0.4 for i in idx])
    ax.set_xticklabels(names, rotation=90, fontsize=7)
    ax.set_ylim(0, 1.05)
    ax.set_ylabel("score")
    ax.set_title("Per-image IoU (sorted by mIoU)")
    ax.legend()
    fig.tight_layout()
    bars_path = out_dir / f"{stem}_per_image.png"
    fig.savefig(bars_path, dpi=120)
    plt.close(fig)
    written.append(bars_path)
    return written
