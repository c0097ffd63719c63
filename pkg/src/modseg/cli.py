"""Command-line interface: segment, eval, selfcheck.

Exit codes follow one contract everywhere: 0 all succeeded, 1 at least one
input failed (itemized on stderr), 2 bad arguments. Config precedence is
flags > optional JSON config file > built-in defaults, and the effective
configuration is embedded in every output's provenance sidecar.

Per-image determinism: each image trains with a seed derived as the first
8 little-endian bytes of sha256("<base_seed>:<stem>"), so results do not
depend on worker count or processing order.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace
from pathlib import Path
from typing import List, Optional, Tuple

from . import __version__
from . import io as iomod
from .errors import ModsegError
from .eval import evaluate_dataset
from .pipeline import TrainConfig, segment_image

CONFIG_KEYS = (
    "tau", "epochs", "lr", "weight_decay", "k", "activation",
    "seed", "restarts", "refine", "lr_decay", "keep_self_loops",
)


def derive_image_seed(base_seed: int, stem: str) -> int:
    digest = hashlib.sha256(f"{base_seed}:{stem}".encode()).digest()
    return int.from_bytes(digest[:8], "little")


def _build_config(args: argparse.Namespace) -> TrainConfig:
    values = {}
    if args.config is not None:
        with open(args.config) as fh:
            file_cfg = json.load(fh)
        unknown = set(file_cfg) - set(CONFIG_KEYS)
        if unknown:
            raise ValueError(f"unknown config file keys: {sorted(unknown)}")
        values.update(file_cfg)
    for key in CONFIG_KEYS:
        flag = getattr(args, key, None)
        if flag is not None:
            values[key] = flag
    return TrainConfig(**values)


def _segment_one(
    feature_path: str, image_path: Optional[str], out_dir: str, cfg: TrainConfig
) -> Tuple[str, Optional[str]]:
    """Worker body: one feature file -> mask PNG + provenance sidecar."""
    stem = Path(feature_path).stem
    try:
        grid = iomod.read_features(feature_path)
        image = None
        if cfg.refine == "smooth" and image_path:
            image = iomod.read_image_rgb(image_path)
        mask, result = segment_image(grid, cfg, image)
        provenance = dict(mask.provenance)
        provenance.update(
            image=stem,
            edges=result.graph.edge_count,
            guide_image=image_path,
            version=__version__,
        )
        out = Path(out_dir)
        iomod.write_mask(mask, out / f"{stem}.png")
        (out / f"{stem}.json").write_text(json.dumps(provenance, indent=2))
        return stem, None
    except (ModsegError, OSError, ValueError) as e:
        return stem, f"{type(e).__name__}: {e}"


def _collect_feature_inputs(args: argparse.Namespace, parser: argparse.ArgumentParser):
    """Resolve (feature_path, guide_image_path) pairs from the input flags."""
    inputs: List[Tuple[str, Optional[str]]] = []

    def guide_for(stem: str, images_dir: Optional[Path]) -> Optional[str]:
        if images_dir is None or not images_dir.is_dir():
            return None
        for candidate in sorted(images_dir.glob(f"{stem}.*")):
            if candidate.suffix.lower() in (".png", ".jpg", ".jpeg", ".bmp", ".pgm", ".ppm"):
                return str(candidate)
        return None

    if args.dataset is not None:
        root = Path(args.dataset)
        features_dir = root / "features"
        if not features_dir.is_dir():
            parser.error(f"{features_dir} does not exist")
        images_dir = root / "images"
        for p in sorted(features_dir.glob(f"*{iomod.FEATURE_SUFFIX}")):
            inputs.append((str(p), guide_for(p.stem, images_dir)))
    else:
        target = Path(args.features)
        images_dir = Path(args.images) if args.images else None
        if target.is_dir():
            for p in sorted(target.glob(f"*{iomod.FEATURE_SUFFIX}")):
                inputs.append((str(p), guide_for(p.stem, images_dir)))
        elif target.is_file():
            inputs.append((str(target), guide_for(target.stem, images_dir)))
        else:
            parser.error(f"{target} does not exist")
    if not inputs:
        parser.error("no feature files found (expected *.unsg)")
    return inputs


def cmd_segment(args: argparse.Namespace, parser: argparse.ArgumentParser) -> int:
    try:
        base_cfg = _build_config(args)
    except (ValueError, OSError) as e:
        parser.error(str(e))
    inputs = _collect_feature_inputs(args, parser)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    workers = args.workers if args.workers is not None else os.cpu_count() or 1

    jobs = []
    for feature_path, image_path in inputs:
        stem = Path(feature_path).stem
        cfg = replace(base_cfg, seed=derive_image_seed(base_cfg.seed, stem))
        jobs.append((feature_path, image_path, str(out_dir), cfg))

    failures: List[Tuple[str, str]] = []
    if workers <= 1 or len(jobs) == 1:
        results = [_segment_one(*job) for job in jobs]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_segment_one, *zip(*jobs)))
    for stem, error in results:
        if error is None:
            print(f"segmented {stem}")
        else:
            failures.append((stem, error))
    if failures:
        for stem, error in failures:
            print(f"FAILED {stem}: {error}", file=sys.stderr)
        print(f"{len(failures)}/{len(jobs)} images failed", file=sys.stderr)
        return 1
    return 0


def cmd_eval(args: argparse.Namespace, parser: argparse.ArgumentParser) -> int:
    pred_dir = Path(args.pred)
    gt_dir = Path(args.gt)
    if not pred_dir.is_dir():
        parser.error(f"--pred {pred_dir} is not a directory")
    if not gt_dir.is_dir():
        parser.error(f"--gt {gt_dir} is not a directory")

    gt_files = {
        p.stem: p for p in sorted(gt_dir.iterdir())
        if p.suffix.lower() in iomod.MASK_SUFFIXES
    }
    pairs = []
    for pred_path in sorted(pred_dir.iterdir()):
        if pred_path.suffix.lower() not in iomod.MASK_SUFFIXES:
            continue
        pairs.append((pred_path.stem, pred_path, gt_files.get(pred_path.stem)))
    if not pairs:
        parser.error(f"no mask files found under {pred_dir}")

    config_snapshot = {"pred": str(pred_dir), "gt": str(gt_dir)}
    report = evaluate_dataset(pairs, config_snapshot)

    report_path = Path(args.report)
    report_path.parent.mkdir(parents=True, exist_ok=True)
    report_path.write_text(report.to_json())

    from . import report as reportmod  # matplotlib import deferred to here

    csv_path = Path(args.csv) if args.csv else report_path.with_suffix(".csv")
    reportmod.write_csv(report, csv_path)
    if not args.no_figures:
        fig_dir = Path(args.figures) if args.figures else report_path.parent
        reportmod.render_figures(report, fig_dir, stem=report_path.stem)

    print(f"aggregate mIoU: {report.aggregate_miou:.4f}")
    if report.failures:
        for f in report.failures:
            print(f"FAILED {f['name']}: {f['error']}", file=sys.stderr)
        return 1
    return 0


def cmd_selfcheck(args: argparse.Namespace, parser: argparse.ArgumentParser) -> int:
    from . import selfcheck

    return 0 if selfcheck.run_all() else 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="modseg",
        description="Unsupervised binary segmentation by modularity-driven "
        "graph clustering of patch features.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    seg = sub.add_parser("segment", help="train per image and write masks")
    src = seg.add_mutually_exclusive_group(required=True)
    src.add_argument("--features", help="feature file or directory of *.unsg files")
    src.add_argument("--dataset", help="dataset root with a features/ subdirectory")
    seg.add_argument("--out", required=True, help="output directory for masks + sidecars")
    seg.add_argument("--images", help="directory of source images for edge refinement")
    seg.add_argument("--config", help="JSON config file (flags override it)")
    seg.add_argument("--tau", type=float, help="similarity threshold (default 0.5)")
    seg.add_argument("--epochs", type=int, help="training epochs per image (default 100)")
    seg.add_argument("--lr", type=float, help="Adam learning rate (default 1e-3)")
    seg.add_argument("--weight-decay", dest="weight_decay", type=float,
                     help="decoupled weight decay (default 1e-2)")
    seg.add_argument("--k", type=int, help="number of clusters (default 2)")
    seg.add_argument("--activation", choices=["silu", "selu", "gelu", "relu"],
                     help="GCN activation (default silu)")
    seg.add_argument("--seed", type=int, help="base RNG seed (default 0)")
    seg.add_argument("--restarts", type=int,
                     help="independent restarts, keep lowest final loss (default 1)")
    seg.add_argument("--refine", choices=["none", "smooth"],
                     help="edge refinement mode (default smooth)")
    seg.add_argument("--lr-decay", dest="lr_decay", type=float,
                     help="per-epoch inverse-time lr decay (default 0, constant lr)")
    seg.add_argument("--workers", type=int,
                     help="parallel workers (default: logical CPU count)")
    seg.set_defaults(func=cmd_segment)

    ev = sub.add_parser("eval", help="score predicted masks against ground truth")
    ev.add_argument("--pred", required=True, help="directory of predicted masks")
    ev.add_argument("--gt", required=True, help="directory of ground-truth masks")
    ev.add_argument("--report", required=True, help="output JSON report path")
    ev.add_argument("--csv", help="CSV output path (default: report path with .csv)")
    ev.add_argument("--figures", help="directory for report figures (default: report dir)")
    ev.add_argument("--no-figures", action="store_true", help="skip figure rendering")
    ev.set_defaults(func=cmd_eval)

    chk = sub.add_parser("selfcheck", help="run the embedded verification battery")
    chk.set_defaults(func=cmd_selfcheck)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    return args.func(args, parser)


if __name__ == "__main__":
    sys.exit(main())
