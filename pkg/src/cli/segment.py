from __future__ import annotations

import argparse
from collections.abc import Sequence
from pathlib import Path
import sys

from config import PipelineConfig, load_config, load_settings, with_overrides
from errors import KCutError, StageError
from logging_utils import setup_logger
from maskgen import DEFAULT_MASK_SIZE
from pipeline import DEFAULT_RESTARTS, SegmentationRequest, run_segmentation


def positive_int(raw: str) -> int:
    value = int(raw)
    if value < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {raw}")
    return value


def nonnegative_int(raw: str) -> int:
    value = int(raw)
    if value < 0:
        raise argparse.ArgumentTypeError(f"expected a nonnegative integer, got {raw}")
    return value


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="segment",
        description="Segment a token feature grid with a fractional K-way normalized cut",
    )
    parser.add_argument("--features", type=Path, required=True, help="N x d float32 NPY feature matrix")
    parser.add_argument("--out", type=Path, required=True, help="Output PGM mask path")
    parser.add_argument("--manifest", type=Path, default=None, help="Run manifest path (default: --out with .json)")
    parser.add_argument("--rgb", type=Path, default=None, help="C x H x W float32 NPY image plane for refinement")
    parser.add_argument("--depth", type=Path, default=None, help="H x W float32 NPY depth plane (needs --rgb)")
    parser.add_argument("--gt", type=Path, default=None, help="Ground-truth mask (.pgm or .npy) for mIoU")
    parser.add_argument("--gt-classes", type=positive_int, default=None)
    parser.add_argument("--background-class", type=nonnegative_int, default=None)
    parser.add_argument("--config", type=Path, default=None, help="JSON pipeline config")
    parser.add_argument("--grid-h", type=positive_int, default=None)
    parser.add_argument("--grid-w", type=positive_int, default=None)
    parser.add_argument("--out-h", type=positive_int, default=DEFAULT_MASK_SIZE)
    parser.add_argument("--out-w", type=positive_int, default=DEFAULT_MASK_SIZE)
    parser.add_argument("--restarts", type=positive_int, default=DEFAULT_RESTARTS)
    parser.add_argument("--seed", type=int, default=None)
    parser.add_argument("--k", type=positive_int, default=None, help="Override k_clusters")
    parser.add_argument("--t-cuts", type=nonnegative_int, default=None, help="Override t_cuts")
    return parser


def parse_args(argv: Sequence[str] | None = None) -> argparse.Namespace:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.depth is not None and args.rgb is None:
        parser.error("--depth requires --rgb")
    if args.k is not None and args.k < 2:
        parser.error(f"--k must be at least 2, got {args.k}")
    return args


def _one_line(exc: BaseException) -> str:
    return " ".join(str(exc).split())


def run_pipeline(argv: Sequence[str] | None = None) -> int:
    try:
        args = parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)

    settings = load_settings()
    logger = setup_logger("segment", settings.debug, settings.log_file)

    try:
        config = load_config(args.config) if args.config else PipelineConfig()
        config = with_overrides(config, seed=args.seed, k_clusters=args.k, t_cuts=args.t_cuts)
    except KCutError as exc:
        print(f"error: stage=config: {_one_line(exc)}", file=sys.stderr)
        return 1

    request = SegmentationRequest(
        features=args.features,
        out=args.out,
        manifest=args.manifest,
        rgb=args.rgb,
        depth=args.depth,
        gt=args.gt,
        config_path=args.config,
        grid_h=args.grid_h,
        grid_w=args.grid_w,
        out_h=args.out_h,
        out_w=args.out_w,
        restarts=args.restarts,
        gt_classes=args.gt_classes,
        background_class=args.background_class,
    )
    try:
        result = run_segmentation(request, config, workers=settings.workers, logger=logger)
    except StageError as exc:
        print(f"error: stage={exc.stage}: {_one_line(exc.cause)}", file=sys.stderr)
        return 1

    if result.manifest.miou is not None:
        print(f"miou={result.manifest.miou:.6f}")
    return 0


def main() -> None:
    raise SystemExit(run_pipeline())


if __name__ == "__main__":
    main()
