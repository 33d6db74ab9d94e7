"""
Automatic configuration module for consensus diarization

Suggests label mapping parameters from the shape of an ensemble, falls back
from greedy to pairwise mapping when the clique budget runs out, and runs the
per-recording combine pipeline.
"""

import logging
import time
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

from label_mapping import (
    DEFAULT_CLIQUE_BUDGET,
    MAPPING_METHODS,
    MERGE_MODES,
    CliqueBudgetExceeded,
    RlsConfig,
    greedy_clique_work,
    map_labels,
    sort_by_avg_der,
)
from mapping_graph import (
    WEIGHT_MODES,
    MappingGraph,
    Partition,
    build_graph,
    iter_partition_labels,
    partition_weight,
)
from rttm_utils import Hypothesis
from voting import VoteConfig, apply_partition, combine

logger = logging.getLogger(__name__)

CLI_CLIQUE_BUDGET = 2_000_000


@dataclass(frozen=True)
class CombineOptions:
    """
    Everything `combine` needs besides the hypotheses.

    Method-specific fields (rls_*, patience, clique_budget, merge, sort_by_der)
    are only honored by the method they belong to.
    """

    method: str = "pairwise"
    sort_by_der: bool = True
    weight_mode: str = "relative"
    merge: str = "union"
    seed: int = 0
    rls_epochs: int = 1000
    rls_iterations: Optional[int] = None
    patience: int = 100
    clique_budget: int = DEFAULT_CLIQUE_BUDGET
    rank_weighting: bool = False
    auto_fallback: bool = False

    def __post_init__(self):
        if self.method not in MAPPING_METHODS + ("auto",):
            raise ValueError(f"Unknown method '{self.method}'")
        if self.weight_mode not in WEIGHT_MODES:
            raise ValueError(f"Unknown weight mode '{self.weight_mode}'")
        if self.merge not in MERGE_MODES:
            raise ValueError(f"Unknown merge mode '{self.merge}'")
        if self.clique_budget < 1:
            raise ValueError(f"clique_budget must be >= 1, got {self.clique_budget}")
        self.rls_config()

    def rls_config(self) -> RlsConfig:
        return RlsConfig(
            epochs=self.rls_epochs,
            iterations=self.rls_iterations,
            seed=self.seed,
            patience=self.patience,
        )

    def vote_config(self) -> VoteConfig:
        return VoteConfig(rank_weighting=self.rank_weighting)


def auto_configure_parameters(
    hypotheses: Sequence[Hypothesis],
    clique_budget: int = DEFAULT_CLIQUE_BUDGET,
) -> Dict:
    """
    Given the hypotheses of one recording, return a dictionary of suggested
    label mapping parameters.

    Args:
        hypotheses: System outputs for one recording
        clique_budget: Clique enumeration budget greedy mapping must fit into

    Returns:
        Dictionary with suggested configuration parameters:
        - n_hypotheses: K
        - part_sizes: speakers per hypothesis
        - n_speakers: C, the largest speaker count
        - greedy_work: cliques greedy mapping would enumerate
        - method: 'greedy' if that work fits the budget, else 'pairwise'
        - rls_iterations: 4*C*K
    """
    part_sizes = [len(h.speakers) for h in hypotheses]
    if not part_sizes or min(part_sizes) == 0:
        raise ValueError("Every hypothesis needs at least one speaker")
    n_hypotheses = len(part_sizes)
    n_speakers = max(part_sizes)
    work = greedy_clique_work(part_sizes)

    return {
        "n_hypotheses": n_hypotheses,
        "part_sizes": part_sizes,
        "n_speakers": n_speakers,
        "greedy_work": work,
        "method": "greedy" if work <= clique_budget else "pairwise",
        "rls_iterations": 4 * n_speakers * n_hypotheses,
    }


def run_mapping_with_fallback(
    hypotheses: Sequence[Hypothesis],
    graph: MappingGraph,
    options: CombineOptions,
) -> Tuple[Partition, str, Optional[Dict]]:
    """
    Run the requested mapping method, relaxing to pairwise mapping if needed.

    Args:
        hypotheses: System outputs for one recording
        graph: Their mapping graph
        options: Combine options; method 'auto' is resolved here

    Returns:
        Tuple of (partition, method actually used, relaxation_info)
        where relaxation_info is None if no relaxation was needed,
        or a dict describing what was relaxed.

    Raises:
        CliqueBudgetExceeded: greedy ran out of budget and auto_fallback is off
    """
    method = options.method
    if method == "auto":
        method = auto_configure_parameters(hypotheses, options.clique_budget)["method"]
        logger.debug("Auto-selected method '%s' for '%s'", method, hypotheses[0].recording_id)

    def try_map(name: str) -> Partition:
        partition, _ = map_labels(
            hypotheses,
            method=name,
            weight_mode=options.weight_mode,
            sort_by_der=options.sort_by_der,
            merge=options.merge,
            rls_config=options.rls_config(),
            clique_budget=options.clique_budget,
            graph=graph,
        )
        return partition

    try:
        return try_map(method), method, None
    except CliqueBudgetExceeded as e:
        if not options.auto_fallback:
            raise
        logger.warning("%s; falling back to pairwise mapping", e)
        relaxation_info = {
            "relaxed": True,
            "requested_method": method,
            "cliques_needed": e.needed,
            "clique_budget": e.budget,
        }
        return try_map("pairwise"), "pairwise", relaxation_info


def combine_recording(hypotheses: Sequence[Hypothesis], options: Optional[CombineOptions] = None) -> Dict:
    """
    Full pipeline for one recording: graph, mapping, relabeling, voting.

    Returns:
        Dictionary with recording_id, method, partition, weight (w(Phi)),
        total_weight (w(G)), elapsed_ms (mapping only), combined and relaxation
    """
    options = options or CombineOptions()
    recording_id = hypotheses[0].recording_id
    graph = build_graph(hypotheses, options.weight_mode)

    started = time.perf_counter()
    partition, method, relaxation = run_mapping_with_fallback(hypotheses, graph, options)
    elapsed_ms = (time.perf_counter() - started) * 1000.0

    weight = partition_weight(graph, partition)
    for c, labels in iter_partition_labels(graph, partition):
        logger.debug("%s clique %d: %s", recording_id, c + 1, " ".join(labels))

    order: Optional[List[int]] = None
    if options.rank_weighting:
        order = sort_by_avg_der(hypotheses)
    combined = combine(apply_partition(hypotheses, partition), options.vote_config(), order)

    logger.info(
        "%s: method=%s w(Phi)=%.4f w(G)=%.4f time=%.1f ms",
        recording_id, method, weight, graph.total_weight, elapsed_ms,
    )
    return {
        "recording_id": recording_id,
        "method": method,
        "partition": partition,
        "graph": graph,
        "weight": weight,
        "total_weight": graph.total_weight,
        "elapsed_ms": elapsed_ms,
        "combined": combined,
        "relaxation": relaxation,
    }
