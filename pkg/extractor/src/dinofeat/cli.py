"""Command line: extract features for one image or a directory of images."""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .checkpoint import load_model
from .errors import DinofeatError
from .extract import extract
from .vit import ATTENTION_LAYERS, VARIANTS

IMAGE_SUFFIXES = (".png", ".jpg", ".jpeg", ".bmp", ".ppm", ".pgm")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="dinofeat",
        description="Extract per-patch transformer features into .unsg feature files.",
    )
    parser.add_argument("images", nargs="+", help="image file(s) or a directory")
    parser.add_argument("--out", required=True,
                        help="output feature file (single image) or directory")
    parser.add_argument("--model-variant", default="dino_vits8",
                        choices=sorted(VARIANTS), help="backbone (default dino_vits8)")
    parser.add_argument("--layer", default="key", choices=ATTENTION_LAYERS,
                        help="which final-block projection to keep (default key)")
    parser.add_argument("--checkpoint", help="explicit checkpoint path "
                        "(default: cache, downloading on first use)")
    parser.add_argument("--cache-dir", help="checkpoint cache directory")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)

    inputs = []
    for entry in args.images:
        p = Path(entry)
        if p.is_dir():
            inputs.extend(
                q for q in sorted(p.iterdir()) if q.suffix.lower() in IMAGE_SUFFIXES
            )
        elif p.is_file():
            inputs.append(p)
        else:
            parser.error(f"{p} does not exist")
    if not inputs:
        parser.error("no input images found")

    out = Path(args.out)
    single_file = len(inputs) == 1 and (out.suffix == ".unsg" or not out.is_dir())
    if not single_file:
        out.mkdir(parents=True, exist_ok=True)

    try:
        model, digest = load_model(args.model_variant, args.checkpoint, args.cache_dir)
    except (DinofeatError, ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1

    failures = 0
    for img_path in inputs:
        target = out if single_file else out / f"{img_path.stem}.unsg"
        try:
            extract(
                img_path, target,
                model_variant=args.model_variant, layer=args.layer,
                model=model, checkpoint_sha256=digest,
            )
            print(f"extracted {img_path.name} -> {target}")
        except DinofeatError as e:
            failures += 1
            print(f"FAILED {img_path.name}: {e}", file=sys.stderr)
    return 1 if failures else 0


if __name__ == "__main__":
    sys.exit(main())
