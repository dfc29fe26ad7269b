from __future__ import annotations

import argparse
from collections.abc import Callable, Sequence
from pathlib import Path
import sys
from typing import TextIO

from bench import (
    METHOD_FRACTIONAL,
    METHOD_SPECTRAL,
    mean_millis,
    run_ablation,
    run_trials,
    write_ablation_csv,
    write_csv,
)
from cli.segment import nonnegative_int, positive_int
from config import PipelineConfig, load_config, load_settings, with_overrides
from errors import KCutError
from logging_utils import setup_logger
from pipeline import DEFAULT_RESTARTS


def parse_args(argv: Sequence[str] | None = None) -> argparse.Namespace:
    parser = argparse.ArgumentParser(
        prog="bench",
        description="Time the fractional cut against recursive spectral bipartition, or ablate its components",
    )
    parser.add_argument("--n", type=positive_int, default=1024, help="Tokens per graph")
    parser.add_argument("--d", type=positive_int, default=64, help="Feature dimension")
    parser.add_argument("--k", type=positive_int, default=32, help="Clusters")
    parser.add_argument("--trials", type=nonnegative_int, default=5)
    parser.add_argument("--t-cuts", type=nonnegative_int, default=None, help="Override t_cuts")
    parser.add_argument("--seed", type=int, default=None)
    parser.add_argument("--config", type=Path, default=None, help="JSON pipeline config")
    parser.add_argument("--out", type=Path, default=None, help="CSV path (default: stdout)")
    parser.add_argument("--ablation", action="store_true", help="Score cumulative component variants on planted scenes")
    parser.add_argument("--grid", type=positive_int, default=8, help="Token grid side in ablation mode")
    parser.add_argument("--size", type=positive_int, default=32, help="Mask side in ablation mode")
    parser.add_argument("--restarts", type=positive_int, default=DEFAULT_RESTARTS)
    args = parser.parse_args(argv)

    tokens = args.grid * args.grid if args.ablation else args.n
    if args.k < 2 or args.k > tokens:
        parser.error(f"--k must lie in [2, {tokens}], got {args.k}")
    if args.ablation and args.size < args.grid:
        parser.error(f"--size must be at least --grid, got {args.size} < {args.grid}")
    return args


def _write(args: argparse.Namespace, writer: Callable[[list, TextIO], None], rows: list) -> None:
    if args.out is None:
        writer(rows, sys.stdout)
        return
    args.out.parent.mkdir(parents=True, exist_ok=True)
    with args.out.open("w", encoding="utf-8", newline="") as stream:
        writer(rows, stream)


def run_bench(argv: Sequence[str] | None = None) -> int:
    try:
        args = parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)

    settings = load_settings()
    logger = setup_logger("bench", settings.debug, settings.log_file)

    try:
        config = load_config(args.config) if args.config else PipelineConfig()
        config = with_overrides(config, k_clusters=args.k, t_cuts=args.t_cuts, seed=args.seed)
        if args.ablation:
            ablation = run_ablation(
                grid=args.grid,
                size=args.size,
                dim=args.d,
                trials=args.trials,
                restarts=args.restarts,
                config=config,
                logger=logger,
            )
            _write(args, write_ablation_csv, ablation)
            return 0
        rows = run_trials(n_nodes=args.n, dim=args.d, trials=args.trials, config=config, logger=logger)
        _write(args, write_csv, rows)
    except (KCutError, OSError) as exc:
        print(f"error: stage=bench: {' '.join(str(exc).split())}", file=sys.stderr)
        return 1

    means = mean_millis(rows)
    if means:
        logger.info(
            "mean_ms %s=%.1f %s=%.1f",
            METHOD_FRACTIONAL,
            means[METHOD_FRACTIONAL],
            METHOD_SPECTRAL,
            means[METHOD_SPECTRAL],
        )
    return 0


def main() -> None:
    raise SystemExit(run_bench())


if __name__ == "__main__":
    main()
