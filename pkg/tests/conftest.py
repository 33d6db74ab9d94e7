"""Shared fixtures for the consensus diarization tests."""

import numpy as np
import pytest

from mapping_graph import MappingGraph, Partition, VertexId
from rttm_utils import Hypothesis, IntervalSet, SpeakerTurn, seconds_to_ms


def _hypothesis(recording_id, speakers):
    return Hypothesis.from_intervals(
        recording_id,
        {
            speaker: IntervalSet.from_pairs((seconds_to_ms(s), seconds_to_ms(e)) for s, e in pairs)
            for speaker, pairs in speakers.items()
        },
    )


@pytest.fixture
def make_hypothesis():
    """Build a Hypothesis from {speaker: [(start_s, end_s), ...]}."""
    def build(speakers, recording_id="rec1"):
        return _hypothesis(recording_id, speakers)
    return build


@pytest.fixture
def random_hypothesis():
    """Random hypothesis with up to `n_speakers` speakers and `n_turns` turns (ms grid)."""
    def build(rng, n_speakers=3, n_turns=8, horizon_ms=20_000, recording_id="rec1", prefix="spk"):
        turns = []
        for _ in range(n_turns):
            onset = int(rng.integers(0, horizon_ms))
            duration = int(rng.integers(1, 3000))
            speaker = f"{prefix}{int(rng.integers(n_speakers))}"
            turns.append(SpeakerTurn(onset, speaker, duration, recording_id))
        return Hypothesis.from_turns(recording_id, turns)
    return build


@pytest.fixture
def random_partition():
    """Uniformly random orthogonal covering partition of a graph."""
    def build(graph, rng):
        assignment = {}
        for k, size in enumerate(graph.part_sizes):
            slots = rng.permutation(graph.C)[:size]
            for i in range(size):
                assignment[VertexId(k, i)] = int(slots[i])
        return Partition.from_assignment(assignment)
    return build


@pytest.fixture
def greedy_trap_graph():
    """K=2, C=2 instance where greedy gets 0.6 and the optimum is 1.0."""
    weights = np.zeros((4, 4))
    for (i, j), w in {(0, 2): 0.6, (0, 3): 0.5, (1, 2): 0.5, (1, 3): 0.0}.items():
        weights[i, j] = weights[j, i] = w
    return MappingGraph((("a1", "a2"), ("b1", "b2")), weights, ((False, False), (False, False)))


@pytest.fixture
def greedy_trap_hypotheses():
    """Two hypotheses whose absolute-overlap graph is the greedy trap instance."""
    h1 = _hypothesis("rec1", {"A1": [(0.0, 1.1)], "A2": [(1.1, 1.6)]})
    h2 = _hypothesis("rec1", {"B1": [(0.0, 0.6), (1.1, 1.6)], "B2": [(0.6, 1.1)]})
    return [h1, h2]


@pytest.fixture
def write_file(tmp_path):
    """Write text into tmp_path/name and return the path."""
    def write(name, text):
        path = tmp_path / name
        path.write_text(text, encoding="utf-8")
        return path
    return write
