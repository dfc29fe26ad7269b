from __future__ import annotations

import csv
from dataclasses import dataclass
import logging
import time
from typing import TextIO

import numpy as np

from config import PipelineConfig, with_overrides
from evaluation import miou
from graph import build_affinity, l2_normalize_rows, ncut_value
from maskgen import argmax_mask
from oracle import spectral_recursive_ncut
from pipeline import RestartOutcome, dream_from_planes, refine_to_pixels, solve_with_restarts
from solver import hard_labels, solve
from tensor_io import LabelMask

BENCH_HEADER = ("trial", "method", "millis", "ncut", "clusters")
ABLATION_HEADER = ("trial", "variant", "ncut", "clusters", "miou")
METHOD_FRACTIONAL = "fractional"
METHOD_SPECTRAL = "spectral_recursive"
PLANTED_NOISE = 0.5
COLOR_NOISE = 0.05
DEPTH_NOISE = 0.05

# cumulative: each variant adds one component to the one before it
SOLVER_VARIANTS = ("linear_hard", "power_hard", "power_soft", "reweighted")
DREAM_VARIANTS = {"dream_rgb": False, "dream_rgbd": True}
ABLATION_VARIANTS = SOLVER_VARIANTS + tuple(DREAM_VARIANTS)


@dataclass(frozen=True)
class BenchRow:
    trial: int
    method: str
    millis: float
    ncut: float
    clusters: int


@dataclass(frozen=True)
class AblationRow:
    trial: int
    variant: str
    ncut: float
    clusters: int
    miou: float


@dataclass(frozen=True, eq=False)
class PlantedScene:
    features: np.ndarray
    grid: int
    rgb: np.ndarray
    depth: np.ndarray
    truth: LabelMask


def _clusters_used(labels: np.ndarray) -> int:
    return int(np.unique(labels).size)


def planted_features(n_nodes: int, dim: int, k: int, rng: np.random.Generator) -> np.ndarray:
    centers = rng.standard_normal((k, dim))
    labels = rng.integers(0, k, size=n_nodes)
    noisy = centers[labels] + PLANTED_NOISE * rng.standard_normal((n_nodes, dim))
    return l2_normalize_rows(noisy)


def planted_scene(grid: int, size: int, dim: int, k: int, rng: np.random.Generator) -> PlantedScene:
    sites = rng.uniform(0.0, size, size=(k, 2))
    rows, cols = np.mgrid[0:size, 0:size] + 0.5
    distance = (rows[..., None] - sites[:, 0]) ** 2 + (cols[..., None] - sites[:, 1]) ** 2
    pixel_labels = np.argmin(distance, axis=-1)

    cell_centers = ((np.arange(grid) + 0.5) * size / grid).astype(np.int64)
    token_labels = pixel_labels[np.ix_(cell_centers, cell_centers)].ravel()
    centers = rng.standard_normal((k, dim))
    features = centers[token_labels] + PLANTED_NOISE * rng.standard_normal((grid * grid, dim))

    colors = rng.uniform(0.0, 1.0, size=(k, 3))
    rgb = np.moveaxis(colors[pixel_labels], -1, 0) + COLOR_NOISE * rng.standard_normal((3, size, size))
    depth = rng.uniform(1.0, 10.0, size=k)[pixel_labels] + DEPTH_NOISE * rng.standard_normal((size, size))
    return PlantedScene(
        features=l2_normalize_rows(features),
        grid=grid,
        rgb=rgb,
        depth=depth,
        truth=LabelMask(pixel_labels),
    )


def run_trials(
    *,
    n_nodes: int,
    dim: int,
    trials: int,
    config: PipelineConfig,
    logger: logging.Logger | None = None,
) -> list[BenchRow]:
    k = config.k_clusters
    rows: list[BenchRow] = []
    for trial in range(trials):
        rng = np.random.default_rng([config.seed % 2**64, trial])
        graph = build_affinity(
            planted_features(n_nodes, dim, k, rng), config.alpha_power, config.lambda_affinity
        )

        started = time.perf_counter()
        asg, report = solve(graph, config, seed=config.seed + trial)
        fractional_ms = (time.perf_counter() - started) * 1000.0
        fractional_labels = hard_labels(asg)

        started = time.perf_counter()
        partition = spectral_recursive_ncut(graph, k)
        spectral_ms = (time.perf_counter() - started) * 1000.0

        rows.append(
            BenchRow(
                trial,
                METHOD_FRACTIONAL,
                fractional_ms,
                ncut_value(graph, fractional_labels, k),
                _clusters_used(fractional_labels),
            )
        )
        rows.append(
            BenchRow(trial, METHOD_SPECTRAL, spectral_ms, ncut_value(graph, partition.labels, k), k)
        )
        if logger is not None:
            logger.info(
                "trial=%d iterations=%d fractional_ms=%.1f spectral_ms=%.1f",
                trial,
                report.iterations_run,
                fractional_ms,
                spectral_ms,
            )
    return rows


def ablation_configs(config: PipelineConfig) -> dict[str, PipelineConfig]:
    return {
        "linear_hard": with_overrides(config, alpha_power=1.0, assignment_rule="hard", beta_reweight=0.0),
        "power_hard": with_overrides(config, assignment_rule="hard", beta_reweight=0.0),
        "power_soft": with_overrides(config, beta_reweight=0.0),
        "reweighted": config,
    }


def run_ablation(
    *,
    grid: int,
    size: int,
    dim: int,
    trials: int,
    restarts: int,
    config: PipelineConfig,
    logger: logging.Logger | None = None,
) -> list[AblationRow]:
    k = config.k_clusters
    variants = ablation_configs(config)
    rows: list[AblationRow] = []
    for trial in range(trials):
        scene = planted_scene(grid, size, dim, k, np.random.default_rng([config.seed % 2**64, trial]))
        outcome: RestartOutcome | None = None
        mask: LabelMask | None = None

        for variant in SOLVER_VARIANTS:
            variant_config = variants[variant]
            graph = build_affinity(scene.features, variant_config.alpha_power, variant_config.lambda_affinity)
            outcome = solve_with_restarts(graph, variant_config, restarts)
            low_mask = argmax_mask(outcome.assignment, grid, grid)
            mask = refine_to_pixels(scene.features, low_mask, k, size, size)
            rows.append(
                AblationRow(
                    trial,
                    variant,
                    outcome.ncut,
                    _clusters_used(outcome.labels),
                    miou(mask, scene.truth, k),
                )
            )

        for variant, with_depth in DREAM_VARIANTS.items():
            refined = dream_from_planes(mask, scene.rgb, scene.depth if with_depth else None, config)
            rows.append(
                AblationRow(
                    trial,
                    variant,
                    outcome.ncut,
                    _clusters_used(outcome.labels),
                    miou(refined, scene.truth, k),
                )
            )

        if logger is not None:
            logger.info(
                "trial=%d %s",
                trial,
                " ".join(f"{row.variant}={row.miou:.4f}" for row in rows if row.trial == trial),
            )
    return rows


def mean_millis(rows: list[BenchRow]) -> dict[str, float]:
    by_method: dict[str, list[float]] = {}
    for row in rows:
        by_method.setdefault(row.method, []).append(row.millis)
    return {method: float(np.mean(values)) for method, values in by_method.items()}


def write_csv(rows: list[BenchRow], stream: TextIO) -> None:
    writer = csv.writer(stream, lineterminator="\n")
    writer.writerow(BENCH_HEADER)
    for row in rows:
        writer.writerow([row.trial, row.method, f"{row.millis:.3f}", f"{row.ncut:.9f}", row.clusters])


def write_ablation_csv(rows: list[AblationRow], stream: TextIO) -> None:
    writer = csv.writer(stream, lineterminator="\n")
    writer.writerow(ABLATION_HEADER)
    for row in rows:
        writer.writerow([row.trial, row.variant, f"{row.ncut:.9f}", row.clusters, f"{row.miou:.6f}"])
