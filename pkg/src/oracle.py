from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import linalg
from scipy.sparse.csgraph import connected_components

from errors import InsufficientNodes, InvariantViolation, TooLarge
from graph import AffinityGraph

DEFAULT_MAX_NODES = 12
TIE_TOL = 1e-12
BATCH_SIZE = 1 << 15


@dataclass(frozen=True, eq=False)
class Partition:
    labels: np.ndarray
    k: int

    def __post_init__(self) -> None:
        labels = np.asarray(self.labels, dtype=np.int64)
        if labels.ndim != 1 or labels.size == 0:
            raise InvariantViolation("labels", "partition labels must be a non-empty vector")
        if labels.min() < 0 or labels.max() >= self.k:
            raise InvariantViolation("labels", f"labels must lie in [0, {self.k})")
        if (np.bincount(labels, minlength=self.k) == 0).any():
            raise InvariantViolation("labels", "every cluster must be nonempty")
        object.__setattr__(self, "labels", labels)


def enumerate_partitions(n_nodes: int, k: int) -> np.ndarray:
    """Every set partition of n_nodes into k nonempty clusters, once each, in lexicographic order."""
    strings = np.zeros((1, 1), dtype=np.int8)
    maxima = np.zeros(1, dtype=np.int8)
    for position in range(1, n_nodes):
        remaining = n_nodes - position - 1
        grown: list[np.ndarray] = []
        grown_max: list[np.ndarray] = []
        for label in range(k):
            new_max = np.maximum(maxima, label)
            keep = (label <= maxima + 1) & (k - 1 - new_max <= remaining)
            if not keep.any():
                continue
            column = np.full((int(keep.sum()), 1), label, dtype=np.int8)
            grown.append(np.hstack([strings[keep], column]))
            grown_max.append(new_max[keep])
        strings = np.vstack(grown)
        maxima = np.concatenate(grown_max)
    strings = strings[maxima == k - 1]
    order = np.lexsort(tuple(strings[:, column] for column in reversed(range(n_nodes))))
    return strings[order].astype(np.int64)


def batch_terms(graph: AffinityGraph, labelings: np.ndarray, k: int) -> tuple[np.ndarray, np.ndarray]:
    associations = []
    volumes = []
    for start in range(0, labelings.shape[0], BATCH_SIZE):
        chunk = labelings[start : start + BATCH_SIZE]
        x = (chunk[:, :, None] == np.arange(k)[None, None, :]).astype(np.float64)
        wx = np.einsum("ij,cjk->cik", graph.weights, x)
        associations.append((x * wx).sum(axis=1))
        volumes.append(np.einsum("cik,i->ck", x, graph.degrees))
    return np.vstack(associations), np.vstack(volumes)


def batch_ncut(graph: AffinityGraph, labelings: np.ndarray, k: int) -> np.ndarray:
    association, volume = batch_terms(graph, labelings, k)
    with np.errstate(divide="ignore", invalid="ignore"):
        ncut = ((volume - association) / volume).sum(axis=1)
    ncut[(volume <= 0).any(axis=1)] = np.inf
    return ncut


def exact_kway_ncut(
    graph: AffinityGraph,
    k: int,
    max_nodes: int = DEFAULT_MAX_NODES,
) -> tuple[Partition, float]:
    n_nodes = graph.n_nodes
    if n_nodes > max_nodes:
        raise TooLarge(f"exhaustive search is limited to {max_nodes} nodes, graph has {n_nodes}")
    if k < 1 or k > n_nodes:
        raise InsufficientNodes(f"cannot split {n_nodes} nodes into {k} nonempty clusters")

    labelings = enumerate_partitions(n_nodes, k)
    ncuts = batch_ncut(graph, labelings, k)
    best = float(ncuts.min())
    index = int(np.flatnonzero(ncuts <= best + TIE_TOL * max(1.0, abs(best)))[0])
    return Partition(labelings[index], k), float(ncuts[index])


def fiedler_pair(weights: np.ndarray) -> tuple[float, np.ndarray, np.ndarray]:
    weights = np.asarray(weights, dtype=np.float64)
    inv_sqrt = 1.0 / np.sqrt(weights.sum(axis=1))
    lsym = np.eye(weights.shape[0]) - inv_sqrt[:, None] * weights * inv_sqrt[None, :]
    lsym = 0.5 * (lsym + lsym.T)
    values, vectors = linalg.eigh(lsym)
    return float(values[1]), vectors[:, 1], lsym


def bipartition(weights: np.ndarray) -> np.ndarray:
    n_components, component = connected_components(weights, directed=False)
    if n_components > 1:
        return component == component[0]
    _, vector, _ = fiedler_pair(weights)
    side = vector >= 0
    if side.all() or not side.any():
        side = np.zeros(weights.shape[0], dtype=bool)
        side[0] = True
    return side


def spectral_recursive_ncut(graph: AffinityGraph, k: int) -> Partition:
    n_nodes = graph.n_nodes
    if k < 1 or k > n_nodes:
        raise InsufficientNodes(f"cannot split {n_nodes} nodes into {k} nonempty clusters")

    parts: list[np.ndarray] = [np.arange(n_nodes)]
    while len(parts) < k:
        splittable = [index for index, nodes in enumerate(parts) if nodes.size >= 2]
        if not splittable:
            raise InsufficientNodes("no subgraph left with two or more nodes")
        target = max(splittable, key=lambda index: (float(graph.degrees[parts[index]].sum()), -index))
        nodes = parts.pop(target)
        side = bipartition(graph.weights[np.ix_(nodes, nodes)])
        parts.extend([nodes[side], nodes[~side]])

    labels = np.empty(n_nodes, dtype=np.int64)
    for cluster, nodes in enumerate(sorted(parts, key=lambda nodes: int(nodes.min()))):
        labels[nodes] = cluster
    return Partition(labels, k)
