from __future__ import annotations

from collections.abc import Iterator
from concurrent.futures import ThreadPoolExecutor
from contextlib import contextmanager
from dataclasses import dataclass
import logging
import math
from pathlib import Path

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator

from config import PipelineConfig
from dream import dream_refine, fuse_affinities, neighborhood_affinity, normalize_depth
from errors import InvariantViolation, KCutError, ShapeMismatch, StageError
from evaluation import miou
from graph import AffinityGraph, build_affinity, l2_normalize_rows, ncut_value, partition_rayleigh
from logging_utils import stage_timer
from maskgen import (
    DEFAULT_MASK_SIZE,
    argmax_mask,
    feature_centers,
    refine_by_similarity,
    upsample_features,
    upsample_nearest,
)
from solver import SoftAssignment, SolveReport, hard_labels, solve
from tensor_io import LabelMask, Tensor, read_mask, read_npy, write_pgm

DEFAULT_RESTARTS = 3


class RunManifest(BaseModel):
    model_config = ConfigDict(frozen=True)

    config: PipelineConfig
    inputs: dict[str, str | None]
    outputs: dict[str, str]
    restart_count: int = Field(ge=1)
    seeds: list[int]
    restart_ncuts: list[float | None]
    best_seed: int
    grid: tuple[int, int]
    mask_size: tuple[int, int]
    objective: float
    ncut: float | None
    collapsed: bool
    iterations_run: int
    polish_moves: int
    converged: bool
    labels_used: list[int]
    dream_applied: bool
    miou: float | None = None
    timings_ms: dict[str, float] = Field(default_factory=dict)

    @field_validator("timings_ms")
    @classmethod
    def _timings_nonnegative(cls, value: dict[str, float]) -> dict[str, float]:
        for stage, millis in value.items():
            if millis < 0:
                raise ValueError(f"negative timing for stage {stage}")
        return value


@dataclass(frozen=True)
class SegmentationRequest:
    features: Path
    out: Path
    manifest: Path | None = None
    rgb: Path | None = None
    depth: Path | None = None
    gt: Path | None = None
    config_path: Path | None = None
    grid_h: int | None = None
    grid_w: int | None = None
    out_h: int = DEFAULT_MASK_SIZE
    out_w: int = DEFAULT_MASK_SIZE
    restarts: int = DEFAULT_RESTARTS
    gt_classes: int | None = None
    background_class: int | None = None

    @property
    def manifest_path(self) -> Path:
        return self.manifest or self.out.with_suffix(".json")


@dataclass(frozen=True, eq=False)
class RestartOutcome:
    assignment: SoftAssignment
    report: SolveReport
    seed: int
    labels: np.ndarray
    ncut: float
    objective: float
    seeds: tuple[int, ...]
    ncuts: tuple[float, ...]


@dataclass(frozen=True)
class SegmentationResult:
    low_mask: LabelMask
    mask: LabelMask
    manifest: RunManifest


@contextmanager
def pipeline_stage(name: str, logger: logging.Logger, timings: dict[str, float]) -> Iterator[None]:
    with stage_timer(logger, name, timings):
        try:
            yield
        except StageError:
            raise
        except (KCutError, OSError) as exc:
            logger.error("stage=%s failed: %s", name, exc)
            raise StageError(name, exc) from exc


def resolve_grid(n_nodes: int, grid_h: int | None, grid_w: int | None) -> tuple[int, int]:
    if grid_h is None and grid_w is None:
        side = math.isqrt(n_nodes)
        if side * side != n_nodes:
            raise ShapeMismatch(f"{n_nodes} tokens do not form a square grid; pass --grid-h/--grid-w")
        return side, side
    if grid_h is None:
        grid_h = n_nodes // grid_w if grid_w else 0
    if grid_w is None:
        grid_w = n_nodes // grid_h if grid_h else 0
    if grid_h < 1 or grid_w < 1 or grid_h * grid_w != n_nodes:
        raise ShapeMismatch(f"grid {grid_h}x{grid_w} does not cover {n_nodes} tokens")
    return grid_h, grid_w


def feature_matrix(tensor: Tensor) -> np.ndarray:
    if len(tensor.shape) == 3:
        height, width, dim = tensor.shape
        return tensor.data.reshape(height * width, dim)
    if len(tensor.shape) != 2:
        raise ShapeMismatch(f"features must be N x d, got shape {tensor.shape}")
    return tensor.data


def _finite_or_none(value: float) -> float | None:
    return value if math.isfinite(value) else None


def solve_with_restarts(
    graph: AffinityGraph,
    config: PipelineConfig,
    restarts: int,
    *,
    workers: int = 1,
    logger: logging.Logger | None = None,
) -> RestartOutcome:
    if restarts < 1:
        raise InvariantViolation("restarts", "at least one restart is required")
    k = config.k_clusters
    seeds = tuple(config.seed + offset for offset in range(restarts))

    def run(seed: int) -> tuple[SoftAssignment, SolveReport]:
        return solve(graph, config, seed=seed, logger=logger)

    with ThreadPoolExecutor(max_workers=max(1, min(workers, restarts))) as pool:
        results = list(pool.map(run, seeds))

    labelings = [hard_labels(asg) for asg, _ in results]
    ncuts = tuple(ncut_value(graph, labels, k) for labels in labelings)
    # collapsed labelings score inf, so any full partition beats them
    best = int(np.argmin(ncuts))
    collapsed = not math.isfinite(ncuts[best])
    if logger is not None:
        if collapsed:
            logger.warning("restarts=%d every restart left a cluster empty", restarts)
        logger.info("restarts=%d best_seed=%d ncut=%.9f", restarts, seeds[best], ncuts[best])
    asg, report = results[best]
    return RestartOutcome(
        assignment=asg,
        report=report,
        seed=seeds[best],
        labels=labelings[best],
        ncut=ncuts[best],
        objective=partition_rayleigh(graph, labelings[best], k),
        seeds=seeds,
        ncuts=ncuts,
    )


def refine_to_pixels(
    normalized: np.ndarray,
    low_mask: LabelMask,
    k: int,
    out_h: int,
    out_w: int,
    logger: logging.Logger | None = None,
) -> LabelMask:
    mask = upsample_nearest(low_mask, out_h, out_w)
    feature_map = normalized.T.reshape(normalized.shape[1], low_mask.height, low_mask.width)
    upsampled = upsample_features(feature_map, out_h, out_w)
    centers = feature_centers(upsampled, mask, k)
    dropped = int((~centers.populated).sum())
    if dropped and logger is not None:
        logger.debug("unpopulated partitions excluded from refinement: %d", dropped)
    return refine_by_similarity(upsampled, centers)


def dream_from_planes(
    mask: LabelMask,
    rgb: Tensor | np.ndarray,
    depth: Tensor | np.ndarray | None,
    config: PipelineConfig,
) -> LabelMask:
    size = (mask.height, mask.width)
    if tuple(rgb.shape[-2:]) != size:
        raise ShapeMismatch(f"rgb plane {rgb.shape} does not match mask size {size[0]}x{size[1]}")
    rgb_field = neighborhood_affinity(rgb, config.lambda_elu, config.eta_std, config.epsilon)

    depth_field = None
    alpha_depth = 0.0
    if depth is not None:
        if tuple(depth.shape[-2:]) != size:
            raise ShapeMismatch(f"depth plane {depth.shape} does not match mask size {size[0]}x{size[1]}")
        depth_field = neighborhood_affinity(
            normalize_depth(depth), config.lambda_elu, config.eta_std, config.epsilon
        )
        alpha_depth = config.alpha_depth

    fused = fuse_affinities(rgb_field, depth_field, config.alpha_rgb, alpha_depth)
    return dream_refine(mask, fused, config.t_ref)


def run_segmentation(
    request: SegmentationRequest,
    config: PipelineConfig,
    *,
    workers: int = 1,
    logger: logging.Logger,
) -> SegmentationResult:
    timings: dict[str, float] = {}
    k = config.k_clusters

    with pipeline_stage("read_features", logger, timings):
        features = feature_matrix(read_npy(request.features))
        grid_h, grid_w = resolve_grid(features.shape[0], request.grid_h, request.grid_w)

    with pipeline_stage("normalize", logger, timings):
        normalized = l2_normalize_rows(features)

    with pipeline_stage("affinity", logger, timings):
        graph = build_affinity(normalized, config.alpha_power, config.lambda_affinity)

    with pipeline_stage("solve", logger, timings):
        outcome = solve_with_restarts(
            graph, config, request.restarts, workers=workers, logger=logger
        )

    with pipeline_stage("mask", logger, timings):
        low_mask = argmax_mask(outcome.assignment, grid_h, grid_w)

    with pipeline_stage("refine", logger, timings):
        mask = refine_to_pixels(normalized, low_mask, k, request.out_h, request.out_w, logger)

    dream_applied = config.t_ref > 0 and request.rgb is not None
    if dream_applied:
        with pipeline_stage("dream", logger, timings):
            depth = read_npy(request.depth) if request.depth is not None else None
            if depth is None:
                logger.info("no depth plane given; refining from rgb only")
            mask = dream_from_planes(mask, read_npy(request.rgb), depth, config)
    elif request.rgb is not None:
        logger.warning("rgb plane given but t_ref is 0; skipping refinement")

    with pipeline_stage("write", logger, timings):
        write_pgm(mask, request.out)

    score = None
    if request.gt is not None:
        with pipeline_stage("evaluate", logger, timings):
            truth = read_mask(request.gt)
            gt_classes = request.gt_classes or int(truth.labels.max()) + 1
            score = miou(
                mask,
                truth,
                gt_classes,
                many_to_one_background=request.background_class is not None,
                background_class=request.background_class,
            )
            logger.info("miou=%.6f", score)

    manifest = RunManifest(
        config=config,
        inputs={
            "features": str(request.features),
            "rgb": str(request.rgb) if request.rgb else None,
            "depth": str(request.depth) if request.depth else None,
            "gt": str(request.gt) if request.gt else None,
            "config": str(request.config_path) if request.config_path else None,
        },
        outputs={"mask": str(request.out), "manifest": str(request.manifest_path)},
        restart_count=request.restarts,
        seeds=list(outcome.seeds),
        restart_ncuts=[_finite_or_none(value) for value in outcome.ncuts],
        best_seed=outcome.seed,
        grid=(grid_h, grid_w),
        mask_size=(request.out_h, request.out_w),
        objective=outcome.objective,
        ncut=_finite_or_none(outcome.ncut),
        collapsed=not math.isfinite(outcome.ncut),
        iterations_run=outcome.report.iterations_run,
        converged=outcome.report.converged,
        polish_moves=outcome.report.polish_moves,
        labels_used=sorted(mask.label_set()),
        dream_applied=dream_applied,
        miou=score,
        timings_ms=timings,
    )
    with pipeline_stage("write", logger, timings):
        path = request.manifest_path
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(manifest.model_dump_json(indent=2) + "\n", encoding="utf-8")

    return SegmentationResult(low_mask=low_mask, mask=mask, manifest=manifest)
