from __future__ import annotations

from dataclasses import dataclass, field
import logging

import numpy as np
from scipy.special import softmax

from config import PipelineConfig
from errors import EmptyClusterVolume, NonFiniteIntermediate, ShapeMismatch, ZeroRowNorm
from graph import AffinityGraph, one_hot, rayleigh_terms

SIMPLEX_TOL = 1e-9
INIT_NOISE = 0.05
ASSIGNMENT_RULES = ("softmax", "mirror", "hard")
POLISH_TOL = 1e-12


@dataclass(frozen=True, eq=False)
class SoftAssignment:
    assignment: np.ndarray
    aux: np.ndarray

    def __post_init__(self) -> None:
        assignment = np.asarray(self.assignment, dtype=np.float64)
        aux = np.asarray(self.aux, dtype=np.float64)
        if assignment.ndim != 2 or aux.shape != (assignment.shape[1],):
            raise ShapeMismatch(
                f"assignment {assignment.shape} and aux {aux.shape} do not describe the same K"
            )
        object.__setattr__(self, "assignment", assignment)
        object.__setattr__(self, "aux", aux)

    @property
    def n_nodes(self) -> int:
        return int(self.assignment.shape[0])

    @property
    def k(self) -> int:
        return int(self.assignment.shape[1])

    def is_row_stochastic(self, tol: float = SIMPLEX_TOL) -> bool:
        x = self.assignment
        return bool(
            np.all(x >= 0.0)
            and np.all(x <= 1.0)
            and np.all(np.abs(x.sum(axis=1) - 1.0) <= tol)
        )

    def has_valid_aux(self) -> bool:
        return bool(np.all(np.isfinite(self.aux)) and np.all(self.aux >= 0.0))


@dataclass(frozen=True)
class SolveReport:
    iterations_run: int
    objective_trace: tuple[float, ...] = field(default_factory=tuple)
    converged: bool = False
    rayleigh_objective: float = 0.0
    polish_moves: int = 0


def initial_assignment(n_nodes: int, k: int, seed: int) -> SoftAssignment:
    # SeedSequence needs nonnegative entropy
    rng = np.random.default_rng(seed % 2**64)
    noise = rng.uniform(-INIT_NOISE / k, INIT_NOISE / k, size=(n_nodes, k))
    x = 1.0 / k + noise
    x /= x.sum(axis=1, keepdims=True)
    return SoftAssignment(assignment=x, aux=np.ones(k))


def hard_labels(asg: SoftAssignment) -> np.ndarray:
    # np.argmax returns the first maximum, so ties go to the smallest k
    return np.argmax(asg.assignment, axis=1)


def fqt_objective(graph: AffinityGraph, asg: SoftAssignment) -> float:
    association, volume = rayleigh_terms(graph, asg.assignment)
    y = asg.aux
    terms = 2.0 * y * np.sqrt(np.maximum(association, 0.0)) - y * y * volume
    value = float(terms.sum())
    if not np.isfinite(value):
        raise NonFiniteIntermediate("quadratic-transform objective is not finite")
    return value


def rayleigh_objective(graph: AffinityGraph, assignment: np.ndarray, epsilon: float = 1e-8) -> float:
    association, volume = rayleigh_terms(graph, assignment)
    ratios = np.divide(association, volume, out=np.zeros_like(volume), where=volume > epsilon)
    return float(ratios.sum())


def update_aux(
    graph: AffinityGraph,
    asg: SoftAssignment,
    *,
    epsilon: float = 1e-8,
    guarded: bool = False,
) -> SoftAssignment:
    association, volume = rayleigh_terms(graph, asg.assignment)
    empty = volume <= epsilon
    if empty.any() and (not guarded or empty.all()):
        raise EmptyClusterVolume(
            f"cluster {int(np.argmax(empty))} has volume {float(volume[empty][0]):.3e} <= {epsilon:g}"
        )
    # argmax over y of 2y*sqrt(a) - y^2*b
    y = np.divide(np.sqrt(np.maximum(association, 0.0)), volume, out=np.zeros_like(volume), where=~empty)
    if not np.isfinite(y).all():
        raise NonFiniteIntermediate("auxiliary variables are not finite")
    return SoftAssignment(assignment=asg.assignment, aux=y)


def cluster_weights(graph: AffinityGraph, asg: SoftAssignment) -> np.ndarray:
    """sqrt(x_k^T W x_k / x_k^T D x_k) when aux is at its optimum for the current X."""
    _, volume = rayleigh_terms(graph, asg.assignment)
    return asg.aux * np.sqrt(np.maximum(volume, 0.0))


def assignment_scores(graph: AffinityGraph, asg: SoftAssignment, epsilon: float) -> np.ndarray:
    x = asg.assignment
    denominator = graph.degrees @ x + epsilon
    return (graph.weights @ x) / denominator[None, :] * cluster_weights(graph, asg)[None, :]


def update_assignment(
    graph: AffinityGraph,
    asg: SoftAssignment,
    temperature: float,
    epsilon: float,
    *,
    rule: str = "softmax",
) -> SoftAssignment:
    if rule not in ASSIGNMENT_RULES:
        raise ValueError(f"unknown assignment rule: {rule}")
    logits = assignment_scores(graph, asg, epsilon) / temperature
    if rule == "hard":
        if not np.isfinite(logits).all():
            raise NonFiniteIntermediate("assignment update produced non-finite scores")
        return SoftAssignment(assignment=one_hot(np.argmax(logits, axis=1), asg.k), aux=asg.aux)
    if rule == "mirror":
        logits = logits + np.log(np.maximum(asg.assignment, np.finfo(np.float64).tiny))
    if not np.isfinite(logits).all():
        raise NonFiniteIntermediate("assignment update produced non-finite scores")
    x_new = softmax(logits, axis=1)
    if not np.isfinite(x_new).all():
        raise NonFiniteIntermediate("assignment update produced non-finite probabilities")
    return SoftAssignment(assignment=x_new, aux=asg.aux)


def reweight_graph(
    graph: AffinityGraph,
    asg: SoftAssignment,
    beta: float,
    *,
    epsilon: float = 1e-8,
) -> AffinityGraph:
    x = asg.assignment
    norms = np.linalg.norm(x, axis=1)
    if (norms <= epsilon).any():
        raise ZeroRowNorm(f"assignment row {int(np.argmin(norms))} has norm <= {epsilon:g}")
    unit = x / norms[:, None]
    cosine = unit @ unit.T
    cosine = np.clip(0.5 * (cosine + cosine.T), -1.0, 1.0)
    factor = np.exp(-np.square(1.0 - cosine) / beta)
    return AffinityGraph.from_weights(graph.weights * factor)


def _ratios(association: np.ndarray, volume: np.ndarray) -> np.ndarray:
    return np.divide(association, volume, out=np.zeros_like(volume), where=volume > 0)


@dataclass
class _HardPartition:
    graph: AffinityGraph
    labels: np.ndarray
    association: np.ndarray
    volume: np.ndarray
    counts: np.ndarray

    @classmethod
    def from_labels(cls, graph: AffinityGraph, labels: np.ndarray, k: int) -> _HardPartition:
        association, volume = rayleigh_terms(graph, one_hot(labels, k))
        return cls(graph, labels, association, volume, np.bincount(labels, minlength=k))

    def links(self, node: int) -> np.ndarray:
        return np.bincount(self.labels, weights=self.graph.weights[node], minlength=self.counts.shape[0])

    def gains(self, node: int, links: np.ndarray) -> np.ndarray:
        source = int(self.labels[node])
        self_loop = self.graph.weights[node, node]
        degree = self.graph.degrees[node]
        before = _ratios(self.association, self.volume)
        source_after = _ratios(
            np.array([self.association[source] - 2.0 * links[source] + self_loop]),
            np.array([self.volume[source] - degree]),
        )[0]
        target_after = _ratios(self.association + 2.0 * links + self_loop, self.volume + degree)
        gains = (source_after - before[source]) + (target_after - before)
        gains[source] = 0.0
        return gains

    def move(self, node: int, target: int, links: np.ndarray) -> None:
        source = int(self.labels[node])
        self_loop = self.graph.weights[node, node]
        degree = self.graph.degrees[node]
        self.association[source] -= 2.0 * links[source] - self_loop
        self.volume[source] -= degree
        self.association[target] += 2.0 * links[target] + self_loop
        self.volume[target] += degree
        self.counts[source] -= 1
        self.counts[target] += 1
        self.labels[node] = target


def polish_labels(graph: AffinityGraph, labels: np.ndarray, k: int, max_sweeps: int) -> tuple[np.ndarray, int]:
    """Greedy single-node moves that raise the hard Rayleigh sum; fills empty clusters first."""
    labels = np.asarray(labels, dtype=np.int64).copy()
    moves = 0
    for _ in range(max_sweeps):
        part = _HardPartition.from_labels(graph, labels, k)
        moved = False

        for target in np.flatnonzero(part.counts == 0):
            donors = np.flatnonzero(part.counts[labels] > 1)
            if donors.size == 0:
                break
            scored = [(part.gains(int(node), part.links(int(node)))[target], int(node)) for node in donors]
            _, node = max(scored, key=lambda item: item[0])
            part.move(node, int(target), part.links(node))
            moves += 1
            moved = True

        for node in range(labels.shape[0]):
            if part.counts[labels[node]] <= 1:
                continue
            links = part.links(node)
            gains = part.gains(node, links)
            target = int(np.argmax(gains))
            if gains[target] <= POLISH_TOL:
                continue
            part.move(node, target, links)
            moves += 1
            moved = True

        if not moved:
            break
    return labels, moves


def _relative_change(previous: float, current: float) -> float:
    return abs(current - previous) / max(abs(previous), 1e-300)


def solve(
    graph: AffinityGraph,
    config: PipelineConfig,
    *,
    seed: int | None = None,
    logger: logging.Logger | None = None,
) -> tuple[SoftAssignment, SolveReport]:
    seed = config.seed if seed is None else seed
    asg = initial_assignment(graph.n_nodes, config.k_clusters, seed)
    current = graph
    trace: list[float] = []
    previous = rayleigh_objective(graph, asg.assignment, config.epsilon)
    objective = previous
    converged = False

    for iteration in range(1, config.t_cuts + 1):
        asg = update_aux(current, asg, epsilon=config.epsilon, guarded=True)
        asg = update_assignment(
            current,
            asg,
            config.softmax_temperature,
            config.epsilon,
            rule=config.assignment_rule,
        )
        trace.append(fqt_objective(current, asg))
        if config.beta_reweight > 0:
            current = reweight_graph(current, asg, config.beta_reweight, epsilon=config.epsilon)

        # always scored on the input graph
        objective = rayleigh_objective(graph, asg.assignment, config.epsilon)
        if logger is not None:
            logger.debug(
                "iteration=%d fqt=%.9f rayleigh=%.9f", iteration, trace[-1], objective
            )
        if _relative_change(previous, objective) < config.objective_tol:
            converged = True
            break
        previous = objective

    polish_moves = 0
    if config.polish_sweeps > 0:
        labels, polish_moves = polish_labels(graph, hard_labels(asg), config.k_clusters, config.polish_sweeps)
        asg = SoftAssignment(assignment=one_hot(labels, config.k_clusters), aux=asg.aux)
        objective = rayleigh_objective(graph, asg.assignment, config.epsilon)
        if logger is not None:
            logger.debug("polish_moves=%d rayleigh=%.9f", polish_moves, objective)

    report = SolveReport(
        iterations_run=len(trace),
        objective_trace=tuple(trace),
        converged=converged,
        rayleigh_objective=objective,
        polish_moves=polish_moves,
    )
    return asg, report
