"""
Voting module for consensus diarization

Relabels hypotheses into the common label space of a clique partition and
combines them by region-wise weighted voting. Overlap aware: each region
keeps as many speakers as the hypotheses agree on, on average.
"""

import logging
from dataclasses import dataclass
from fractions import Fraction
from typing import Dict, FrozenSet, List, Optional, Sequence, Tuple

from mapping_graph import Partition, VertexId
from rttm_utils import Hypothesis, IntervalSet, sweep_activity

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class Region:
    """Elementary time region with the labels each hypothesis has active in it."""

    start_ms: int
    end_ms: int
    active: Tuple[FrozenSet[str], ...]

    def __post_init__(self):
        if self.end_ms <= self.start_ms:
            raise ValueError(f"Region [{self.start_ms}, {self.end_ms}) is empty")

    @property
    def start(self) -> float:
        return self.start_ms / 1000.0

    @property
    def end(self) -> float:
        return self.end_ms / 1000.0

    @property
    def duration_ms(self) -> int:
        return self.end_ms - self.start_ms


@dataclass(frozen=True)
class VoteConfig:
    """
    Voting weights.

    rank_weighting: weight hypothesis of rank r (0 = best) by 1/(r+1),
        normalized; otherwise every hypothesis weighs 1/K.
    """

    rank_weighting: bool = False

    def weights(self, n_hypotheses: int, order: Optional[Sequence[int]] = None) -> List[Fraction]:
        """
        Per-hypothesis weights summing to exactly 1.

        Args:
            n_hypotheses: K
            order: hypothesis indices best first (input order when omitted)
        """
        if n_hypotheses < 1:
            raise ValueError("Need at least one hypothesis to vote")
        if not self.rank_weighting:
            return [Fraction(1, n_hypotheses)] * n_hypotheses
        order = list(order) if order is not None else list(range(n_hypotheses))
        if sorted(order) != list(range(n_hypotheses)):
            raise ValueError("order must be a permutation of the hypothesis indices")
        raw = [Fraction(0)] * n_hypotheses
        for rank, k in enumerate(order):
            raw[k] = Fraction(1, rank + 1)
        total = sum(raw)
        return [w / total for w in raw]


def label_sort_key(label: str) -> Tuple[int, int, str]:
    """Numeric labels in numeric order, then everything else alphabetically."""
    if label.isdigit():
        return (0, int(label), "")
    return (1, 0, label)


def apply_partition(hypotheses: Sequence[Hypothesis], partition: Partition) -> List[Hypothesis]:
    """
    Rename every speaker to the 1-based index of its clique.

    Vertex (k, i) stands for the i-th speaker (sorted) of hypotheses[k].
    Vertices of the partition that are not real speakers (padding) are ignored.

    Raises:
        ValueError: if a speaker's vertex is missing from the partition
    """
    clique_of = partition.assignment()
    relabeled = []
    for k, hypothesis in enumerate(hypotheses):
        mapping: Dict[str, str] = {}
        for i, speaker in enumerate(hypothesis.speakers):
            vertex = VertexId(k, i)
            if vertex not in clique_of:
                raise ValueError(f"Speaker '{speaker}' of hypothesis {k} ({vertex}) is not in the partition")
            mapping[speaker] = str(clique_of[vertex] + 1)
        relabeled.append(hypothesis.relabel(mapping))
    return relabeled


def split_regions(hypotheses: Sequence[Hypothesis]) -> List[Region]:
    """
    Cut the union of all activity at every turn boundary.

    Silent gaps (no hypothesis active) produce no region.
    """
    activity = {
        (k, label): intervals
        for k, hypothesis in enumerate(hypotheses)
        for label, intervals in hypothesis.speaker_intervals().items()
    }
    regions = []
    for lo, hi, active in sweep_activity(activity):
        if not active:
            continue
        per_hypothesis = tuple(
            frozenset(label for part, label in active if part == k) for k in range(len(hypotheses))
        )
        regions.append(Region(lo, hi, per_hypothesis))
    return regions


def vote_region(region: Region, weights: Sequence[Fraction]) -> List[str]:
    """Labels emitted for one region: the top n-hat labels by summed weight."""
    expected = sum((w * len(labels) for w, labels in zip(weights, region.active)), Fraction(0))
    n_hat = int(expected + Fraction(1, 2))  # floor(x + 1/2): halves round up

    scores: Dict[str, Fraction] = {}
    for w, labels in zip(weights, region.active):
        for label in labels:
            scores[label] = scores.get(label, Fraction(0)) + w
    ranked = sorted(
        (label for label, score in scores.items() if score > 0),
        key=lambda label: (-scores[label], label_sort_key(label)),
    )
    return ranked[:n_hat]


def combine(
    relabeled: Sequence[Hypothesis],
    config: Optional[VoteConfig] = None,
    order: Optional[Sequence[int]] = None,
) -> Hypothesis:
    """
    Region-wise weighted voting over hypotheses that share a label set.

    Args:
        relabeled: At least two hypotheses of one recording (see apply_partition)
        config: Weighting scheme (uniform by default)
        order: Ranking of the hypotheses, best first; used by rank weighting

    Returns:
        Normalized consensus Hypothesis
    """
    if len(relabeled) < 2:
        raise ValueError("At least 2 hypotheses are required for voting")
    recording_ids = {h.recording_id for h in relabeled}
    if len(recording_ids) > 1:
        raise ValueError(f"Cannot vote across recordings: {sorted(recording_ids)}")

    config = config or VoteConfig()
    weights = config.weights(len(relabeled), order)

    pairs: Dict[str, List[Tuple[int, int]]] = {}
    regions = split_regions(relabeled)
    for region in regions:
        for label in vote_region(region, weights):
            pairs.setdefault(label, []).append((region.start_ms, region.end_ms))

    combined = Hypothesis.from_intervals(
        relabeled[0].recording_id,
        {label: IntervalSet.from_pairs(p) for label, p in sorted(pairs.items(), key=lambda kv: label_sort_key(kv[0]))},
    )
    logger.debug(
        "Voted %d regions of '%s' into %d turns", len(regions), combined.recording_id, len(combined.turns)
    )
    return combined
