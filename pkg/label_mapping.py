"""
Label mapping solvers

Maps the speakers of K diarization hypotheses onto a common label set by
partitioning the mapping graph into orthogonal cliques. Implements:

- greedy maximal-clique mapping (exponential in K, exact clique enumeration)
- pairwise Hungarian mapping with a merge step (linear in K)
- randomized local search over orthogonal partitions
- exact oracles: exhaustive enumeration and an OR-Tools CP-SAT model
"""

import itertools
import logging
import math
from dataclasses import dataclass, field
from typing import Dict, Iterator, List, Mapping, Optional, Sequence, Tuple

import networkx as nx
import numpy as np
from ortools.sat.python import cp_model

from der_scoring import average_der_matrix
from hungarian import hungarian_assign
from mapping_graph import (
    MappingGraph,
    Partition,
    VertexId,
    build_graph,
    pad_to_complete,
    partition_weight,
    weight_matrix_between,
)
from rttm_utils import Hypothesis, SpeakerTurn

logger = logging.getLogger(__name__)

DEFAULT_CLIQUE_BUDGET = 10**7
DEFAULT_ORACLE_CAP = 10**6
MAPPING_METHODS = ("greedy", "pairwise", "rls")
MERGE_MODES = ("union", "anchor")

_CLIQUE_CHUNK = 50_000


class CliqueBudgetExceeded(RuntimeError):
    """Greedy mapping would enumerate more maximal cliques than allowed."""

    def __init__(self, needed: int, budget: int):
        self.needed = needed
        self.budget = budget
        super().__init__(f"Maximal clique enumeration needs {needed} cliques, budget is {budget}")


class OracleTooLarge(RuntimeError):
    """Exhaustive search space exceeds the configured cap."""


@dataclass(frozen=True)
class RlsConfig:
    """
    Randomized local search budget.

    iterations=None resolves to 4*C*K for the graph being solved.
    """

    epochs: int = 1000
    iterations: Optional[int] = None
    seed: int = 0
    patience: int = 100

    def __post_init__(self):
        if self.epochs < 1:
            raise ValueError(f"epochs must be >= 1, got {self.epochs}")
        if self.iterations is not None and self.iterations < 1:
            raise ValueError(f"iterations must be >= 1, got {self.iterations}")
        if self.patience < 1:
            raise ValueError(f"patience must be >= 1, got {self.patience}")

    def iterations_for(self, graph: MappingGraph) -> int:
        return self.iterations if self.iterations is not None else 4 * graph.C * graph.K


@dataclass(frozen=True)
class RlsResult:
    partition: Partition
    weight: float
    epochs_run: int
    history: Tuple[float, ...] = field(default=())


# ---------------------------------------------------------------------------
# Greedy (maximal clique) mapping
# ---------------------------------------------------------------------------


def count_maximal_cliques(part_sizes: Sequence[int]) -> int:
    """Maximal cliques of a complete multipartite graph: one vertex from every non-empty part."""
    nonempty = [size for size in part_sizes if size > 0]
    return math.prod(nonempty) if nonempty else 0


def greedy_clique_work(part_sizes: Sequence[int]) -> int:
    """
    Total cliques greedy mapping enumerates over all rounds.

    The graph is padded to C = max(part_sizes) per part and every round removes
    one vertex per part, so the total is sum over r of (C - r)^K.
    """
    C, K = max(part_sizes), len(part_sizes)
    return sum((C - r) ** K for r in range(C))


def _multipartite_nx(graph: MappingGraph) -> nx.Graph:
    # Every cross-part pair is an edge, zero weights included.
    return nx.complete_multipartite_graph(*graph.part_sizes)


def enumerate_maximal_cliques(graph: MappingGraph, budget: int = DEFAULT_CLIQUE_BUDGET) -> Iterator[frozenset]:
    """
    Yield every maximal clique of the graph as a frozenset of VertexId.

    Raises:
        CliqueBudgetExceeded: before yielding anything, if the clique count exceeds `budget`
    """
    needed = count_maximal_cliques(graph.part_sizes)
    if needed > budget:
        raise CliqueBudgetExceeded(needed, budget)
    for clique in nx.find_cliques(_multipartite_nx(graph)):
        yield frozenset(graph.vertex_at(index) for index in clique)


def _best_clique(weights: np.ndarray, cliques: Iterator[List[int]]) -> Tuple[float, Tuple[int, ...]]:
    """Highest-weight clique; ties go to the lexicographically smallest sorted vertex tuple."""
    best_weight = -1.0
    best_key: Tuple[int, ...] = ()
    while True:
        chunk = list(itertools.islice(cliques, _CLIQUE_CHUNK))
        if not chunk:
            break
        members = np.sort(np.array(chunk, dtype=np.int64), axis=1)
        size = members.shape[1]
        scores = np.zeros(len(members))
        for i in range(size):
            for j in range(i + 1, size):
                scores += weights[members[:, i], members[:, j]]
        top = scores.max()
        if top < best_weight:
            continue
        candidates = members[scores == top]
        order = np.lexsort(candidates.T[::-1])
        key = tuple(int(x) for x in candidates[order[0]])
        if top > best_weight or key < best_key:
            best_weight, best_key = float(top), key
    return best_weight, best_key


def map_labels_greedy(graph: MappingGraph, budget: int = DEFAULT_CLIQUE_BUDGET) -> Partition:
    """
    Greedy maximal-clique label mapping.

    Repeatedly enumerates the maximal cliques among the remaining vertices,
    keeps the one with the largest internal weight and removes its vertices.
    The graph is padded to complete first; dummies are dropped from the result.

    Args:
        graph: Mapping graph
        budget: Maximum number of cliques enumerated over all rounds

    Raises:
        CliqueBudgetExceeded: when the next round would exceed the budget
    """
    padded = pad_to_complete(graph)
    full = _multipartite_nx(padded)
    weights = padded.weight_matrix
    remaining = set(full.nodes)
    used = 0
    cliques: List[frozenset] = []

    while remaining:
        sizes = [sum(1 for i in padded.part_indices(k) if i in remaining) for k in range(padded.K)]
        needed = count_maximal_cliques(sizes)
        if used + needed > budget:
            raise CliqueBudgetExceeded(used + needed, budget)
        used += needed
        _, best = _best_clique(weights, nx.find_cliques(full.subgraph(remaining)))
        cliques.append(frozenset(padded.vertex_at(i) for i in best))
        remaining.difference_update(best)

    logger.debug("Greedy mapping enumerated %d cliques over %d rounds", used, len(cliques))
    return Partition(tuple(cliques)).without_dummies(padded)


# ---------------------------------------------------------------------------
# Pairwise (Hungarian + merge) mapping
# ---------------------------------------------------------------------------


def complete_local_map(running: Hypothesis, incoming: Hypothesis, mapping: Mapping[str, str]) -> Dict[str, str]:
    """
    Extend a partial map (incoming speaker -> running label) to every incoming
    speaker. Unmapped speakers get fresh labels that clash with nothing.
    """
    taken = set(running.speakers) | set(mapping.values())
    completed = dict(mapping)
    counter = itertools.count()
    for speaker in incoming.speakers:
        if speaker in completed:
            continue
        label = speaker
        while label in taken:
            label = f"{speaker}~{next(counter)}"
        completed[speaker] = label
        taken.add(label)
    return completed


def merge_hypotheses(h1: Hypothesis, h2: Hypothesis, mapping: Mapping[str, str]) -> Hypothesis:
    """
    Merge two hypotheses under a local label map.

    Speakers of `h1` keep their labels; each speaker of `h2` is renamed via
    `mapping` (unmapped ones get fresh labels). Same-label activity is unioned,
    so overlapping turns are not double counted.

    Raises:
        ValueError: if two h2 speakers map to one label or a key is not an h2 speaker
    """
    unknown = set(mapping) - set(h2.speakers)
    if unknown:
        raise ValueError(f"Mapping names speakers not in the second hypothesis: {sorted(unknown)}")
    targets = list(mapping.values())
    if len(targets) != len(set(targets)):
        raise ValueError("Local label map is not injective: two speakers collide on one label")
    if h1.turns and h2.turns and h1.recording_id != h2.recording_id:
        raise ValueError(f"Cannot merge '{h1.recording_id}' with '{h2.recording_id}'")

    recording_id = h1.recording_id if h1.turns else h2.recording_id
    completed = complete_local_map(h1, h2, mapping)
    relabeled = h2.relabel(completed)
    moved = tuple(SpeakerTurn(t.onset_ms, t.speaker, t.duration_ms, recording_id) for t in relabeled.turns)
    return Hypothesis.from_turns(recording_id, h1.turns + moved)


def average_der(hypotheses: Sequence[Hypothesis]) -> List[float]:
    """
    Mean DER of each hypothesis scored against every other one as reference.

    Column means of `average_der_matrix` with the diagonal left out. Hypotheses
    without speech are not used as references; a hypothesis with no usable
    reference gets an infinite average.
    """
    matrix = average_der_matrix(hypotheses)
    np.fill_diagonal(matrix, np.nan)
    scored = ~np.isnan(matrix)
    counts = scored.sum(axis=0)
    totals = np.where(scored, matrix, 0.0).sum(axis=0)
    averages = np.where(counts > 0, totals / np.maximum(counts, 1), np.inf)
    return [float(a) for a in averages]


def sort_by_avg_der(hypotheses: Sequence[Hypothesis]) -> List[int]:
    """Indices of `hypotheses` ordered by ascending average DER (stable on ties)."""
    if len(hypotheses) < 2:
        raise ValueError("At least 2 hypotheses are required for DER-based sorting")
    averages = average_der(hypotheses)
    order = sorted(range(len(hypotheses)), key=lambda k: averages[k])
    logger.debug("Average DERs %s -> order %s", [round(a, 4) for a in averages], order)
    return order


def map_labels_pairwise(
    hypotheses: Sequence[Hypothesis],
    weight_mode: str = "relative",
    sort: bool = True,
    merge: str = "union",
) -> Partition:
    """
    Pairwise Hungarian label mapping.

    The running hypothesis starts as the first hypothesis (after optional
    DER-based sorting). Each further hypothesis is matched against the running
    labels with weights recomputed from the running activity sets, then merged
    in. With merge='anchor' the running hypothesis never grows, so every
    hypothesis is matched against the first one only.

    Returns:
        Partition over VertexId(k, i), with k the index in the original input
        order and i the position in hypotheses[k].speakers
    """
    if len(hypotheses) < 2:
        raise ValueError("At least 2 hypotheses are required for label mapping")
    if merge not in MERGE_MODES:
        raise ValueError(f"Unknown merge mode '{merge}', expected one of {MERGE_MODES}")

    order = sort_by_avg_der(hypotheses) if sort else list(range(len(hypotheses)))
    first = hypotheses[order[0]]
    running = first.relabel({speaker: str(i) for i, speaker in enumerate(first.speakers)})
    global_map: Dict[VertexId, int] = {VertexId(order[0], i): i for i in range(len(first.speakers))}
    next_label = len(first.speakers)

    for k in order[1:]:
        incoming = hypotheses[k]
        running_activity = running.speaker_intervals()
        running_labels = list(running_activity.keys())
        incoming_activity = incoming.speaker_intervals()
        block = weight_matrix_between(list(running_activity.values()), list(incoming_activity.values()), weight_mode)

        local: Dict[str, str] = {}
        if running_labels and incoming_activity:
            for row, col in hungarian_assign(block).items():
                local[incoming.speakers[col]] = running_labels[row]
        for speaker in incoming.speakers:
            if speaker not in local:
                local[speaker] = str(next_label)
                next_label += 1

        if merge == "union":
            running = merge_hypotheses(running, incoming, local)
        for i, speaker in enumerate(incoming.speakers):
            global_map[VertexId(k, i)] = int(local[speaker])

    return Partition.from_assignment(global_map)


def map_labels_pairwise_graph(graph: MappingGraph, order: Optional[Sequence[int]] = None) -> Partition:
    """
    Pairwise Hungarian mapping on a bare weighted graph.

    Merged vertices are re-weighted by summing the weights of their members,
    which is exact for edge weights that do not come from activity sets.
    """
    order = list(order) if order is not None else list(range(graph.K))
    if sorted(order) != list(range(graph.K)):
        raise ValueError("order must be a permutation of the graph parts")

    weights = graph.weight_matrix
    clusters: List[List[int]] = [[index] for index in graph.part_indices(order[0])]
    for k in order[1:]:
        columns = graph.part_indices(k)
        block = np.array([[weights[members, col].sum() for col in columns] for members in clusters])
        psi = hungarian_assign(block)
        matched = set(psi.values())
        for row, col in psi.items():
            clusters[row].append(columns[col])
        clusters.extend([columns[col]] for col in range(len(columns)) if col not in matched)

    cliques = tuple(frozenset(graph.vertex_at(i) for i in members) for members in clusters)
    return Partition(cliques).without_dummies(graph)


# ---------------------------------------------------------------------------
# Randomized local search
# ---------------------------------------------------------------------------


def _epoch_rng(seed: int, epoch: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=(epoch,)))


def _slots_to_partition(graph: MappingGraph, slots: np.ndarray) -> Partition:
    K, C = slots.shape
    cliques = tuple(frozenset(VertexId(k, int(slots[k, c])) for k in range(K)) for c in range(C))
    return Partition(cliques).without_dummies(graph)


def run_rls(graph: MappingGraph, config: Optional[RlsConfig] = None) -> RlsResult:
    """
    Randomized local search for a maximum-weight orthogonal partition.

    Each epoch starts from a uniformly random partition and performs
    `iterations` edge-guided swaps: a cross-clique edge (u, v) is drawn with
    probability proportional to its weight, then u is swapped (p=1/2) with the
    vertex of its part sitting in v's clique and, independently (p=1/2), v with
    the vertex of its part sitting in u's clique. The best partition visited is
    kept; search stops after `patience` epochs without improvement or when the
    best weight reaches w(G).
    """
    config = config or RlsConfig()
    padded = pad_to_complete(graph)
    K, C = padded.K, padded.C
    iterations = config.iterations_for(padded)
    weights = padded.weight_matrix
    upper = np.triu(weights, 1)
    total = float(upper.sum())
    tolerance = 1e-12 * max(1.0, total)
    vertex_part = np.repeat(np.arange(K), C)
    vertex_member = np.tile(np.arange(C), K)

    best_weight = -1.0
    best_slots = None
    history: List[float] = []
    stale = 0
    epochs_run = 0

    for epoch in range(config.epochs):
        epochs_run += 1
        rng = _epoch_rng(config.seed, epoch)
        # slots[k, c] = member of part k placed in clique c; clique_of is the inverse
        slots = np.stack([rng.permutation(C) for _ in range(K)])
        clique_of = np.empty((K, C), dtype=np.int64)
        for k in range(K):
            clique_of[k, slots[k]] = np.arange(C)

        improved = False
        for step in range(iterations + 1):
            labels = clique_of[vertex_part, vertex_member]
            cross = upper * (labels[:, None] != labels[None, :])
            cross_weight = float(cross.sum())
            weight = total - cross_weight
            if weight > best_weight + tolerance:
                best_weight, best_slots, improved = weight, slots.copy(), True
            if cross_weight <= tolerance or best_weight >= total - tolerance:
                break
            if step == iterations:
                break

            flat = np.cumsum(cross.ravel())
            pick = int(np.searchsorted(flat, rng.random() * flat[-1], side="right"))
            pick = min(pick, flat.size - 1)
            u, v = divmod(pick, weights.shape[0])
            pu, pv = vertex_part[u], vertex_part[v]
            cu, cv = clique_of[pu, vertex_member[u]], clique_of[pv, vertex_member[v]]
            if rng.random() < 0.5:
                _swap(slots, clique_of, pu, cu, cv)
            if rng.random() < 0.5:
                _swap(slots, clique_of, pv, cv, cu)

        history.append(best_weight)
        stale = 0 if improved else stale + 1
        if best_weight >= total - tolerance or stale >= config.patience:
            break

    logger.debug("RLS ran %d epochs, best weight %.6f of w(G)=%.6f", epochs_run, best_weight, total)
    return RlsResult(_slots_to_partition(padded, best_slots), max(best_weight, 0.0), epochs_run, tuple(history))


def _swap(slots: np.ndarray, clique_of: np.ndarray, part: int, c1: int, c2: int) -> None:
    """Exchange the members of `part` sitting in cliques c1 and c2."""
    a, b = slots[part, c1], slots[part, c2]
    slots[part, c1], slots[part, c2] = b, a
    clique_of[part, a], clique_of[part, b] = c2, c1


def map_labels_rls(graph: MappingGraph, config: Optional[RlsConfig] = None) -> Partition:
    return run_rls(graph, config).partition


# ---------------------------------------------------------------------------
# Exact oracles
# ---------------------------------------------------------------------------


def brute_force_optimum(graph: MappingGraph, cap: int = DEFAULT_ORACLE_CAP) -> Tuple[Partition, float]:
    """
    Exhaustive search over all orthogonal covering partitions.

    Part 0 is fixed to clique order; every other part ranges over all C!
    permutations, giving (C!)^(K-1) candidates.

    Raises:
        OracleTooLarge: if the candidate count exceeds `cap`
    """
    padded = pad_to_complete(graph)
    K, C = padded.K, padded.C
    n_perms = math.factorial(C)
    candidates = n_perms ** (K - 1)
    if candidates > cap:
        raise OracleTooLarge(f"{candidates} candidate partitions exceed the oracle cap of {cap}")

    perms = np.array(list(itertools.permutations(range(C))), dtype=np.int64)
    identity = np.arange(C)
    w = padded.weight_matrix

    # scores[p_1, ..., p_{K-1}]: partition weight when part l uses permutation p_l
    def block(k: int, l: int) -> np.ndarray:
        return w[k * C:(k + 1) * C, l * C:(l + 1) * C]

    scores = np.zeros((n_perms,) * (K - 1))
    for l in range(1, K):
        table = block(0, l)[identity[None, :], perms].sum(axis=1)
        shape = [1] * (K - 1)
        shape[l - 1] = n_perms
        scores = scores + table.reshape(shape)
    for k in range(1, K):
        for l in range(k + 1, K):
            table = block(k, l)[perms[:, None, :], perms[None, :, :]].sum(axis=2)
            shape = [1] * (K - 1)
            shape[k - 1] = n_perms
            shape[l - 1] = n_perms
            scores = scores + table.reshape(shape)

    best_flat = int(np.argmax(scores))
    best_perm_idx = np.unravel_index(best_flat, scores.shape)
    slots = np.vstack([identity] + [perms[p] for p in best_perm_idx])
    partition = _slots_to_partition(padded, slots)
    return partition, partition_weight(graph, partition)


def solve_exact_cpsat(graph: MappingGraph, time_limit_seconds: float = 30.0, scale: int = 10**6) -> Dict:
    """
    Exact maximum-weight orthogonal partition with OR-Tools CP-SAT.

    Weights are scaled to integers by `scale`; the returned weight is
    recomputed from the original real weights.

    Returns:
        Dictionary with 'partition', 'weight' and 'optimal', or 'error'
    """
    padded = pad_to_complete(graph)
    K, C = padded.K, padded.C
    w = padded.weight_matrix
    model = cp_model.CpModel()

    x = {(k, i, c): model.NewBoolVar(f"x_{k}_{i}_{c}") for k in range(K) for i in range(C) for c in range(C)}
    for k in range(K):
        for i in range(C):
            model.AddExactlyOne(x[k, i, c] for c in range(C))
        for c in range(C):
            model.AddExactlyOne(x[k, i, c] for i in range(C))
    for i in range(C):
        model.Add(x[0, i, i] == 1)

    objective = []
    for k in range(K):
        for l in range(k + 1, K):
            for i in range(C):
                for j in range(C):
                    coefficient = int(round(w[k * C + i, l * C + j] * scale))
                    if coefficient <= 0:
                        continue
                    for c in range(C):
                        y = model.NewBoolVar(f"y_{k}_{i}_{l}_{j}_{c}")
                        model.AddImplication(y, x[k, i, c])
                        model.AddImplication(y, x[l, j, c])
                        objective.append(coefficient * y)
    if objective:
        model.Maximize(sum(objective))

    solver = cp_model.CpSolver()
    solver.parameters.max_time_in_seconds = time_limit_seconds
    solver.parameters.num_workers = 1
    status = solver.Solve(model)
    if status not in (cp_model.OPTIMAL, cp_model.FEASIBLE):
        return {'error': f"CP-SAT found no solution (status {solver.StatusName(status)})"}

    slots = np.zeros((K, C), dtype=np.int64)
    for (k, i, c), var in x.items():
        if solver.Value(var):
            slots[k, c] = i
    partition = _slots_to_partition(padded, slots)
    return {
        'partition': partition,
        'weight': partition_weight(graph, partition),
        'optimal': status == cp_model.OPTIMAL,
    }


# ---------------------------------------------------------------------------
# Dispatcher
# ---------------------------------------------------------------------------


def map_labels(
    hypotheses: Sequence[Hypothesis],
    method: str = "pairwise",
    weight_mode: str = "relative",
    sort_by_der: bool = True,
    merge: str = "union",
    rls_config: Optional[RlsConfig] = None,
    clique_budget: int = DEFAULT_CLIQUE_BUDGET,
    graph: Optional[MappingGraph] = None,
) -> Tuple[Partition, MappingGraph]:
    """
    Run one mapping method on the hypotheses of a recording.

    Returns:
        (partition, graph) with the graph built from `hypotheses` if not given
    """
    if method not in MAPPING_METHODS:
        raise ValueError(f"Unknown mapping method '{method}', expected one of {MAPPING_METHODS}")
    graph = graph if graph is not None else build_graph(hypotheses, weight_mode)
    if method == "greedy":
        partition = map_labels_greedy(graph, clique_budget)
    elif method == "rls":
        partition = map_labels_rls(graph, rls_config)
    else:
        partition = map_labels_pairwise(hypotheses, weight_mode, sort_by_der, merge)
    return partition, graph
