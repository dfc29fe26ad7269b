from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from errors import (
    DegenerateAffinity,
    InsufficientNodes,
    InvariantViolation,
    NegativeCut,
    NonFiniteInput,
    ShapeMismatch,
    ZeroRowNorm,
)
from tensor_io import Tensor

SYMMETRY_RTOL = 1e-12
LAPLACIAN_SLACK = 1e-9


@dataclass(frozen=True, eq=False)
class AffinityGraph:
    weights: np.ndarray
    degrees: np.ndarray

    @property
    def n_nodes(self) -> int:
        return int(self.weights.shape[0])

    @classmethod
    def from_weights(cls, weights: np.ndarray) -> AffinityGraph:
        matrix = np.array(weights, dtype=np.float64)
        if matrix.ndim != 2 or matrix.shape[0] != matrix.shape[1] or matrix.shape[0] < 1:
            raise ShapeMismatch(f"affinity weights must be a square matrix, got {matrix.shape}")
        if not np.isfinite(matrix).all():
            raise NonFiniteInput("affinity weights contain NaN or Inf")
        if (matrix < 0).any():
            raise InvariantViolation("weights", "affinity weights must be nonnegative")
        scale = float(np.abs(matrix).max()) if matrix.size else 0.0
        if float(np.abs(matrix - matrix.T).max()) > SYMMETRY_RTOL * max(scale, 1e-300):
            raise InvariantViolation("weights", "affinity weights must be symmetric")
        matrix.setflags(write=False)
        degrees = matrix.sum(axis=1)
        degrees.setflags(write=False)
        return cls(weights=matrix, degrees=degrees)


def _feature_matrix(features: Tensor | np.ndarray) -> np.ndarray:
    data = features.data if isinstance(features, Tensor) else features
    matrix = np.asarray(data, dtype=np.float64)
    if matrix.ndim != 2:
        raise ShapeMismatch(f"features must be an N x d matrix, got shape {matrix.shape}")
    return matrix


def l2_normalize_rows(features: Tensor | np.ndarray) -> np.ndarray:
    matrix = _feature_matrix(features)
    if not np.isfinite(matrix).all():
        raise NonFiniteInput("features contain NaN or Inf")
    norms = np.linalg.norm(matrix, axis=1)
    if (norms == 0).any():
        raise ZeroRowNorm(f"feature row {int(np.argmin(norms))} has zero norm")
    return matrix / norms[:, None]


def build_affinity(
    features: Tensor | np.ndarray,
    alpha_power: float,
    lambda_affinity: float,
) -> AffinityGraph:
    matrix = _feature_matrix(features)
    n_nodes, dim = matrix.shape
    if n_nodes < 2 or dim < 1:
        raise InsufficientNodes(f"need at least 2 nodes and 1 feature dimension, got {matrix.shape}")
    if not np.isfinite(matrix).all():
        raise NonFiniteInput("features contain NaN or Inf")

    raw = matrix @ matrix.T
    raw = 0.5 * (raw + raw.T)
    low = float(raw.min())
    high = float(raw.max())
    if high == low:
        raise DegenerateAffinity("all pairwise similarities are identical; min-max scaling is undefined")

    powered = np.power((raw - low) / (high - low), alpha_power)
    # regularization uses degrees of the powered matrix, final degrees come after
    weights = powered.copy()
    weights[np.diag_indices(n_nodes)] += lambda_affinity * powered.sum(axis=1)
    return AffinityGraph.from_weights(weights)


def laplacian_quadratic(graph: AffinityGraph, x: np.ndarray) -> float:
    vector = np.asarray(x, dtype=np.float64)
    if vector.shape != (graph.n_nodes,):
        raise ShapeMismatch(f"expected a length-{graph.n_nodes} vector, got shape {vector.shape}")
    if not np.isfinite(vector).all():
        raise NonFiniteInput("vector contains NaN or Inf")

    value = float(graph.degrees @ (vector * vector) - vector @ (graph.weights @ vector))
    if value < 0:
        slack = LAPLACIAN_SLACK * float(vector @ vector) * max(1.0, float(graph.degrees.max()))
        if value < -slack:
            raise NegativeCut(f"Laplacian quadratic form is negative ({value:.3e})")
        return 0.0
    return value


def rayleigh_terms(graph: AffinityGraph, assignment: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    assignment = np.asarray(assignment, dtype=np.float64)
    if assignment.ndim != 2 or assignment.shape[0] != graph.n_nodes:
        raise ShapeMismatch(
            f"assignment must have {graph.n_nodes} rows, got shape {assignment.shape}"
        )
    association = np.einsum("ik,ik->k", assignment, graph.weights @ assignment)
    volume = graph.degrees @ (assignment * assignment)
    return association, volume


def one_hot(labels: np.ndarray, k: int) -> np.ndarray:
    labels = np.asarray(labels, dtype=np.int64).ravel()
    if labels.size and (int(labels.min()) < 0 or int(labels.max()) >= k):
        raise ShapeMismatch(f"labels must lie in [0, {k})")
    return (labels[:, None] == np.arange(k)[None, :]).astype(np.float64)


def partition_rayleigh(graph: AffinityGraph, labels: np.ndarray, k: int) -> float:
    association, volume = rayleigh_terms(graph, one_hot(labels, k))
    ratios = np.divide(association, volume, out=np.zeros_like(volume), where=volume > 0)
    return float(ratios.sum())


def ncut_value(graph: AffinityGraph, labels: np.ndarray, k: int) -> float:
    """Normalized cut of a hard labeling; inf when a cluster is empty or has zero volume."""
    association, volume = rayleigh_terms(graph, one_hot(labels, k))
    if (volume <= 0).any():
        return float("inf")
    return float(((volume - association) / volume).sum())
