from __future__ import annotations

import numpy as np
import pytest

from errors import InsufficientNodes, InvariantViolation, TooLarge
from graph import AffinityGraph, ncut_value
from oracle import (
    Partition,
    batch_terms,
    bipartition,
    enumerate_partitions,
    exact_kway_ncut,
    fiedler_pair,
    spectral_recursive_ncut,
)


def _random_graph(rng: np.random.Generator, n_nodes: int) -> AffinityGraph:
    upper = np.triu(rng.uniform(0.05, 1.0, size=(n_nodes, n_nodes)), 1)
    return AffinityGraph.from_weights(upper + upper.T)


def _planted_blocks(sizes: list[int], inner: float, outer: float) -> AffinityGraph:
    labels = np.repeat(np.arange(len(sizes)), sizes)
    weights = np.where(labels[:, None] == labels[None, :], inner, outer)
    np.fill_diagonal(weights, 0.0)
    return AffinityGraph.from_weights(weights)


@pytest.mark.parametrize(("n_nodes", "k", "count"), [(5, 2, 15), (5, 3, 25), (6, 3, 90), (4, 4, 1), (3, 1, 1)])
def test_enumeration_matches_stirling_numbers(n_nodes: int, k: int, count: int) -> None:
    labelings = enumerate_partitions(n_nodes, k)

    assert labelings.shape == (count, n_nodes)
    assert np.all(labelings[:, 0] == 0)
    assert len({tuple(row) for row in labelings.tolist()}) == count
    assert all(len(set(row)) == k for row in labelings.tolist())
    assert labelings.tolist() == sorted(labelings.tolist())


def test_exact_on_two_cliques(two_clique_graph: AffinityGraph) -> None:
    partition, value = exact_kway_ncut(two_clique_graph, 2)

    assert partition.labels.tolist() == [0, 0, 1, 1]
    assert value == 0.0


def test_exact_on_path(path3_graph: AffinityGraph) -> None:
    partition, value = exact_kway_ncut(path3_graph, 2)

    assert value == pytest.approx(4.0 / 3.0, abs=1e-12)
    assert partition.labels.tolist() == [0, 0, 1]


def test_exact_on_complete_graph() -> None:
    graph = AffinityGraph.from_weights(np.ones((4, 4)) - np.eye(4))

    partition, value = exact_kway_ncut(graph, 2)

    assert value == pytest.approx(4.0 / 3.0, abs=1e-12)
    assert ncut_value(graph, partition.labels, 2) == pytest.approx(value, abs=1e-12)
    assert ncut_value(graph, np.array([0, 0, 1, 1]), 2) == pytest.approx(4.0 / 3.0, abs=1e-12)


def test_exact_minimum_is_k_minus_best_rayleigh(rng: np.random.Generator) -> None:
    for _ in range(50):
        n_nodes = int(rng.integers(2, 9))
        k = int(rng.integers(1, min(n_nodes, 4) + 1))
        graph = _random_graph(rng, n_nodes)

        _, value = exact_kway_ncut(graph, k)
        association, volume = batch_terms(graph, enumerate_partitions(n_nodes, k), k)

        assert value == pytest.approx(k - float((association / volume).sum(axis=1).max()), abs=1e-9)


def test_exact_limits(rng: np.random.Generator) -> None:
    with pytest.raises(TooLarge):
        exact_kway_ncut(_random_graph(rng, 13), 2)
    with pytest.raises(InsufficientNodes):
        exact_kway_ncut(_random_graph(rng, 3), 4)


def test_ncut_value_of_empty_cluster_is_infinite(two_clique_graph: AffinityGraph) -> None:
    assert ncut_value(two_clique_graph, np.zeros(4, dtype=int), 2) == float("inf")


def test_partition_validation() -> None:
    assert Partition(np.array([1, 0, 1]), 2).labels.tolist() == [1, 0, 1]
    with pytest.raises(InvariantViolation):
        Partition(np.array([0, 0, 0]), 2)
    with pytest.raises(InvariantViolation):
        Partition(np.array([0, -1, 1]), 2)
    with pytest.raises(InvariantViolation):
        Partition(np.array([], dtype=int), 1)


def test_spectral_on_cliques_and_path(two_clique_graph: AffinityGraph, path3_graph: AffinityGraph) -> None:
    assert spectral_recursive_ncut(two_clique_graph, 2).labels.tolist() == [0, 0, 1, 1]

    path = spectral_recursive_ncut(path3_graph, 2)

    assert ncut_value(path3_graph, path.labels, 2) == pytest.approx(exact_kway_ncut(path3_graph, 2)[1], abs=1e-9)


def test_spectral_on_planted_blocks() -> None:
    graph = _planted_blocks([4, 3, 2], inner=1.0, outer=0.05)

    greedy = spectral_recursive_ncut(graph, 3)
    _, optimum = exact_kway_ncut(graph, 3)

    assert ncut_value(graph, greedy.labels, 3) >= optimum - 1e-12


def test_spectral_never_beats_exhaustive(rng: np.random.Generator) -> None:
    for _ in range(200):
        n_nodes = int(rng.integers(2, 11))
        k = int(rng.integers(2, min(n_nodes, 4) + 1))
        graph = _random_graph(rng, n_nodes)

        greedy = spectral_recursive_ncut(graph, k)
        _, optimum = exact_kway_ncut(graph, k)

        assert ncut_value(graph, greedy.labels, k) >= optimum - 1e-9


def test_fiedler_pair_residual(rng: np.random.Generator) -> None:
    for _ in range(100):
        weights = _random_graph(rng, int(rng.integers(2, 20))).weights

        mu, vector, lsym = fiedler_pair(weights)

        assert np.linalg.norm(lsym @ vector - mu * vector) <= 1e-8
        assert np.linalg.norm(vector) == pytest.approx(1.0, abs=1e-12)


def test_bipartition_splits_off_first_component() -> None:
    weights = np.zeros((4, 4))
    weights[1, 3] = weights[3, 1] = 1.0
    weights[0, 2] = weights[2, 0] = 1.0

    assert bipartition(weights).tolist() == [True, False, True, False]


def test_spectral_rejects_too_many_clusters(path3_graph: AffinityGraph) -> None:
    with pytest.raises(InsufficientNodes):
        spectral_recursive_ncut(path3_graph, 4)
