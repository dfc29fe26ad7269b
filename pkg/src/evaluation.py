from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import linear_sum_assignment

from errors import BackgroundClassRequired, LabelOutOfRange, NonFiniteCost, ShapeMismatch
from tensor_io import LabelMask


@dataclass(frozen=True, eq=False)
class CostMatrix:
    costs: np.ndarray

    def __post_init__(self) -> None:
        costs = np.asarray(self.costs, dtype=np.float64)
        if costs.ndim != 2 or costs.shape[0] < 1 or costs.shape[1] < 1:
            raise ShapeMismatch(f"cost matrix must be a non-empty 2-D array, got {costs.shape}")
        if not np.isfinite(costs).all():
            raise NonFiniteCost("cost matrix contains NaN or Inf")
        object.__setattr__(self, "costs", costs)

    @property
    def rows(self) -> int:
        return int(self.costs.shape[0])

    @property
    def cols(self) -> int:
        return int(self.costs.shape[1])


@dataclass(frozen=True)
class MatchResult:
    assignment: tuple[tuple[int, int], ...]
    total_cost: float

    def as_dict(self) -> dict[int, int]:
        return dict(self.assignment)


def hungarian_match(costs: CostMatrix | np.ndarray) -> MatchResult:
    matrix = costs if isinstance(costs, CostMatrix) else CostMatrix(costs)
    size = max(matrix.rows, matrix.cols)
    padded = np.full((size, size), float(matrix.costs.max()) + 1.0)
    padded[: matrix.rows, : matrix.cols] = matrix.costs

    row_ind, col_ind = linear_sum_assignment(padded)
    pairs = tuple(
        (int(row), int(col))
        for row, col in zip(row_ind, col_ind)
        if row < matrix.rows and col < matrix.cols
    )
    total = 0.0
    for row, col in pairs:
        total += float(matrix.costs[row, col])
    return MatchResult(assignment=pairs, total_cost=total)


def iou_matrix(pred: LabelMask, gt: LabelMask, gt_classes: int) -> tuple[np.ndarray, np.ndarray]:
    if (pred.height, pred.width) != (gt.height, gt.width):
        raise ShapeMismatch(
            f"prediction {pred.height}x{pred.width} does not match ground truth {gt.height}x{gt.width}"
        )
    gt.check_labels(gt_classes)
    clusters, pred_index = np.unique(pred.labels.ravel(), return_inverse=True)
    truth = gt.labels.ravel()

    joint = np.bincount(
        pred_index * gt_classes + truth, minlength=clusters.size * gt_classes
    ).reshape(clusters.size, gt_classes)
    pred_area = joint.sum(axis=1)
    gt_area = np.bincount(truth, minlength=gt_classes)
    union = pred_area[:, None] + gt_area[None, :] - joint
    iou = np.divide(joint, union, out=np.zeros(joint.shape), where=union > 0)
    return clusters, iou


def miou(
    pred: LabelMask,
    gt: LabelMask,
    gt_classes: int,
    many_to_one_background: bool = False,
    background_class: int | None = None,
) -> float:
    if many_to_one_background and background_class is None:
        raise BackgroundClassRequired("many-to-one matching needs a background class")
    if background_class is not None and not 0 <= background_class < gt_classes:
        raise LabelOutOfRange(f"background class {background_class} is outside [0, {gt_classes})")

    clusters, iou = iou_matrix(pred, gt, gt_classes)
    match = hungarian_match(CostMatrix(-iou))

    # -1 marks predicted pixels that belong to no gt class
    mapping = np.full(clusters.size, -1, dtype=np.int64)
    for row, col in match.assignment:
        mapping[row] = col
    if many_to_one_background:
        mapping[mapping < 0] = background_class

    mapped = mapping[np.searchsorted(clusters, pred.labels.ravel())]
    truth = gt.labels.ravel()
    present = np.unique(truth)
    scores = []
    for cls in present:
        predicted = mapped == cls
        actual = truth == cls
        union = np.count_nonzero(predicted | actual)
        scores.append(np.count_nonzero(predicted & actual) / union)
    return float(np.mean(scores))
