"""
K-partite mapping graph for label mapping

Each hypothesis contributes one independent set of speaker vertices; every pair
of vertices from different hypotheses is an edge weighted by the overlap of the
two speakers' activity. Also evaluates the partition objective (sum of
intra-clique edge weights) and validates orthogonal partitions.
"""

import logging
from dataclasses import dataclass
from typing import Dict, FrozenSet, Iterable, Iterator, List, Optional, Sequence, Tuple

import numpy as np

from rttm_utils import Hypothesis, IntervalSet

logger = logging.getLogger(__name__)

WEIGHT_MODES = ("relative", "absolute")
DUMMY_PREFIX = "<dummy>"


class PartitionError(ValueError):
    """Partition is not orthogonal, not covering, or names unknown vertices."""


@dataclass(frozen=True, order=True)
class VertexId:
    """Speaker `member` of hypothesis `part`."""

    part: int
    member: int

    def __str__(self) -> str:
        return f"{self.part}.{self.member}"


@dataclass(frozen=True, eq=False)
class MappingGraph:
    """
    Weighted K-partite graph.

    `weight_matrix` is a dense symmetric matrix over all vertices, ordered part
    by part; blocks inside a part are zero (each part is an independent set).
    """

    parts: Tuple[Tuple[str, ...], ...]
    weight_matrix: np.ndarray
    dummy_flags: Tuple[Tuple[bool, ...], ...]

    def __post_init__(self):
        if any(len(labels) == 0 for labels in self.parts):
            raise ValueError("Every part needs at least one vertex")
        if len(self.dummy_flags) != len(self.parts) or any(
            len(flags) != len(labels) for flags, labels in zip(self.dummy_flags, self.parts)
        ):
            raise ValueError("dummy_flags must match the part layout")

        n = sum(len(labels) for labels in self.parts)
        w = np.array(self.weight_matrix, dtype=float)
        if w.shape != (n, n):
            raise ValueError(f"Weight matrix must be {n}x{n}, got {w.shape}")
        if not np.all(np.isfinite(w)) or np.any(w < 0):
            raise ValueError("Weights must be finite and non-negative")
        if not np.array_equal(w, w.T):
            raise ValueError("Weight matrix must be symmetric")
        offsets = np.cumsum([0] + [len(labels) for labels in self.parts])
        for k in range(len(self.parts)):
            lo, hi = offsets[k], offsets[k + 1]
            if np.any(w[lo:hi, lo:hi] != 0):
                raise ValueError(f"Part {k} must be an independent set (no intra-part weights)")
        dummy_mask = np.array([flag for flags in self.dummy_flags for flag in flags], dtype=bool)
        if np.any(w[dummy_mask] != 0):
            raise ValueError("Edges incident to dummy vertices must have weight 0")

        w.setflags(write=False)
        object.__setattr__(self, "weight_matrix", w)
        object.__setattr__(self, "_offsets", tuple(int(o) for o in offsets))

    @property
    def K(self) -> int:
        return len(self.parts)

    @property
    def C(self) -> int:
        return max(len(labels) for labels in self.parts)

    @property
    def part_sizes(self) -> Tuple[int, ...]:
        return tuple(len(labels) for labels in self.parts)

    @property
    def n_vertices(self) -> int:
        return self._offsets[-1]

    @property
    def is_complete(self) -> bool:
        return all(size == self.C for size in self.part_sizes)

    def index(self, vertex: VertexId) -> int:
        """Row of `vertex` in the weight matrix."""
        if not (0 <= vertex.part < self.K and 0 <= vertex.member < len(self.parts[vertex.part])):
            raise PartitionError(f"Vertex {vertex} is not in the graph")
        return self._offsets[vertex.part] + vertex.member

    def part_indices(self, part: int) -> List[int]:
        return list(range(self._offsets[part], self._offsets[part + 1]))

    def vertex_at(self, index: int) -> VertexId:
        part = int(np.searchsorted(self._offsets, index, side="right")) - 1
        return VertexId(part, index - self._offsets[part])

    def vertices(self, include_dummies: bool = True) -> List[VertexId]:
        return [
            VertexId(k, i)
            for k, flags in enumerate(self.dummy_flags)
            for i, is_dummy in enumerate(flags)
            if include_dummies or not is_dummy
        ]

    def is_dummy(self, vertex: VertexId) -> bool:
        return self.dummy_flags[vertex.part][vertex.member]

    def label(self, vertex: VertexId) -> str:
        return self.parts[vertex.part][vertex.member]

    def weight(self, u: VertexId, v: VertexId) -> float:
        return float(self.weight_matrix[self.index(u), self.index(v)])

    def edges(self) -> Iterator[Tuple[VertexId, VertexId, float]]:
        """All cross-part vertex pairs (u before v), zero-weight edges included."""
        for k in range(self.K):
            for kappa in range(k + 1, self.K):
                for i in range(len(self.parts[k])):
                    for j in range(len(self.parts[kappa])):
                        u, v = VertexId(k, i), VertexId(kappa, j)
                        yield u, v, self.weight(u, v)

    @property
    def total_weight(self) -> float:
        """w(G): sum of all edge weights."""
        return float(np.triu(self.weight_matrix, 1).sum())


@dataclass(frozen=True)
class Partition:
    """
    Orthogonal clique set. Cliques are stored canonically: empty cliques are
    dropped and the rest are ordered by their smallest vertex.
    """

    cliques: Tuple[FrozenSet[VertexId], ...]

    def __post_init__(self):
        cliques = [frozenset(c) for c in self.cliques if c]
        cliques.sort(key=min)
        object.__setattr__(self, "cliques", tuple(cliques))

    @classmethod
    def from_assignment(cls, assignment: Dict[VertexId, int]) -> "Partition":
        """Build from a global label map (vertex -> clique index)."""
        groups: Dict[int, set] = {}
        for vertex, clique in assignment.items():
            groups.setdefault(clique, set()).add(vertex)
        return cls(tuple(frozenset(g) for g in groups.values()))

    def assignment(self) -> Dict[VertexId, int]:
        return {vertex: c for c, clique in enumerate(self.cliques) for vertex in clique}

    def vertices(self) -> FrozenSet[VertexId]:
        return frozenset(v for clique in self.cliques for v in clique)

    def without_dummies(self, graph: MappingGraph) -> "Partition":
        return Partition(tuple(frozenset(v for v in c if not graph.is_dummy(v)) for c in self.cliques))

    def __len__(self) -> int:
        return len(self.cliques)


def overlap_weight(a: IntervalSet, b: IntervalSet, weight_mode: str = "relative") -> float:
    """
    Edge weight between two activity sets.

    'relative' is the Jaccard overlap |a & b| / |a | b| (0 when both are empty);
    'absolute' is |a & b| in seconds.
    """
    if weight_mode not in WEIGHT_MODES:
        raise ValueError(f"Unknown weight mode '{weight_mode}', expected one of {WEIGHT_MODES}")
    shared_ms = (a & b).total_ms
    if weight_mode == "absolute":
        return shared_ms / 1000.0
    union_ms = a.total_ms + b.total_ms - shared_ms
    return shared_ms / union_ms if union_ms > 0 else 0.0


def weight_matrix_between(
    left: Sequence[IntervalSet],
    right: Sequence[IntervalSet],
    weight_mode: str = "relative",
) -> np.ndarray:
    """len(left) x len(right) matrix of overlap weights."""
    matrix = np.zeros((len(left), len(right)))
    for i, a in enumerate(left):
        for j, b in enumerate(right):
            matrix[i, j] = overlap_weight(a, b, weight_mode)
    return matrix


def build_graph(hypotheses: Sequence[Hypothesis], weight_mode: str = "relative") -> MappingGraph:
    """
    Build the mapping graph, one part per hypothesis and one vertex per speaker.

    Args:
        hypotheses: At least two hypotheses of the same recording
        weight_mode: 'relative' (Jaccard, default) or 'absolute' (seconds)

    Returns:
        MappingGraph whose part k lists hypotheses[k].speakers in order
    """
    if len(hypotheses) < 2:
        raise ValueError("At least 2 hypotheses are required to build a mapping graph")
    recording_ids = {h.recording_id for h in hypotheses}
    if len(recording_ids) > 1:
        raise ValueError(f"Hypotheses belong to different recordings: {sorted(recording_ids)}")
    for k, hypothesis in enumerate(hypotheses):
        if not hypothesis.speakers:
            raise ValueError(f"Hypothesis {k} has no speakers")
    if weight_mode not in WEIGHT_MODES:
        raise ValueError(f"Unknown weight mode '{weight_mode}', expected one of {WEIGHT_MODES}")

    activity = [h.speaker_intervals() for h in hypotheses]
    parts = tuple(tuple(a.keys()) for a in activity)
    offsets = np.cumsum([0] + [len(p) for p in parts])
    weights = np.zeros((offsets[-1], offsets[-1]))

    for k in range(len(hypotheses)):
        for kappa in range(k + 1, len(hypotheses)):
            block = weight_matrix_between(list(activity[k].values()), list(activity[kappa].values()), weight_mode)
            weights[offsets[k]:offsets[k + 1], offsets[kappa]:offsets[kappa + 1]] = block
            weights[offsets[kappa]:offsets[kappa + 1], offsets[k]:offsets[k + 1]] = block.T

    dummy_flags = tuple(tuple(False for _ in labels) for labels in parts)
    logger.debug("Built %d-partite graph with part sizes %s", len(parts), [len(p) for p in parts])
    return MappingGraph(parts, weights, dummy_flags)


def random_graph(part_sizes: Sequence[int], rng: np.random.Generator) -> MappingGraph:
    """Synthetic K-partite graph with uniform [0, 1) weights on every cross-part edge."""
    if len(part_sizes) < 2 or any(size < 1 for size in part_sizes):
        raise ValueError("Need at least 2 parts, each with at least 1 vertex")
    parts = tuple(tuple(f"s{i}" for i in range(size)) for size in part_sizes)
    n = sum(part_sizes)
    upper = np.triu(rng.random((n, n)), 1)
    weights = upper + upper.T
    offsets = np.cumsum([0] + list(part_sizes))
    for k in range(len(part_sizes)):
        weights[offsets[k]:offsets[k + 1], offsets[k]:offsets[k + 1]] = 0.0
    dummy_flags = tuple(tuple(False for _ in range(size)) for size in part_sizes)
    return MappingGraph(parts, weights, dummy_flags)


def pad_to_complete(graph: MappingGraph) -> MappingGraph:
    """
    Add dummy vertices until every part has C vertices.

    Dummies are appended after the real members of each part (so every real
    VertexId keeps its identity) and all their edges have weight 0.
    """
    if graph.is_complete:
        return graph

    C = graph.C
    parts = []
    dummy_flags = []
    real_rows: List[int] = []
    for k, labels in enumerate(graph.parts):
        missing = C - len(labels)
        parts.append(labels + tuple(f"{DUMMY_PREFIX}{k}.{i}" for i in range(len(labels), C)))
        dummy_flags.append(graph.dummy_flags[k] + (True,) * missing)
        real_rows.extend(k * C + i for i in range(len(labels)))

    weights = np.zeros((graph.K * C, graph.K * C))
    rows = np.array(real_rows)
    weights[np.ix_(rows, rows)] = graph.weight_matrix
    logger.debug("Padded graph with %d dummy vertices", graph.K * C - graph.n_vertices)
    return MappingGraph(tuple(parts), weights, tuple(dummy_flags))


def validate_partition(graph: MappingGraph, partition: Partition) -> None:
    """
    Check that `partition` is orthogonal, disjoint and covers every real vertex.

    Dummy vertices may be present or absent.

    Raises:
        PartitionError: describing the first violation
    """
    seen = set()
    for c, clique in enumerate(partition.cliques):
        parts_in_clique = set()
        for vertex in clique:
            graph.index(vertex)
            if vertex in seen:
                raise PartitionError(f"Vertex {vertex} appears in more than one clique")
            if vertex.part in parts_in_clique:
                raise PartitionError(f"Clique {c} holds two vertices of hypothesis {vertex.part}")
            parts_in_clique.add(vertex.part)
            seen.add(vertex)
    missing = [v for v in graph.vertices(include_dummies=False) if v not in seen]
    if missing:
        raise PartitionError(f"Partition does not cover vertices {[str(v) for v in missing]}")


def partition_weight(graph: MappingGraph, partition: Partition) -> float:
    """w(Phi): sum over cliques of the edge weights inside each clique."""
    validate_partition(graph, partition)
    total = 0.0
    for clique in partition.cliques:
        rows = [graph.index(v) for v in clique]
        total += float(graph.weight_matrix[np.ix_(rows, rows)].sum()) / 2.0
    return total


def cross_clique_edges(graph: MappingGraph, partition: Partition) -> List[Tuple[Tuple[VertexId, VertexId], float]]:
    """Edges whose endpoints lie in different cliques; uncovered dummies count as singletons."""
    validate_partition(graph, partition)
    clique_of = partition.assignment()
    return [
        ((u, v), w)
        for u, v, w in graph.edges()
        if clique_of.get(u, ("single", u)) != clique_of.get(v, ("single", v))
    ]


def dump_edge_list(graph: MappingGraph) -> str:
    """Plain-text edge list, one `k.i kappa.j weight` line per edge."""
    lines = [f"{u} {v} {w:.6f}" for u, v, w in graph.edges()]
    return "\n".join(lines) + ("\n" if lines else "")


def iter_partition_labels(graph: MappingGraph, partition: Partition) -> Iterable[Tuple[int, List[str]]]:
    """(clique index, hypothesis labels) pairs, handy for debug logging."""
    for c, clique in enumerate(partition.cliques):
        yield c, [f"{v.part}:{graph.label(v)}" for v in sorted(clique)]
