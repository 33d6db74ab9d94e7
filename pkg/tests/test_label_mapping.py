import itertools

import numpy as np
import pytest

from label_mapping import (
    CliqueBudgetExceeded,
    OracleTooLarge,
    RlsConfig,
    average_der,
    brute_force_optimum,
    complete_local_map,
    count_maximal_cliques,
    enumerate_maximal_cliques,
    greedy_clique_work,
    map_labels,
    map_labels_greedy,
    map_labels_pairwise,
    map_labels_pairwise_graph,
    map_labels_rls,
    merge_hypotheses,
    run_rls,
    solve_exact_cpsat,
    sort_by_avg_der,
)
from mapping_graph import MappingGraph, Partition, VertexId, build_graph, partition_weight, random_graph
from rttm_utils import Hypothesis

V = VertexId


def all_partitions(graph):
    """Every orthogonal covering partition of a complete graph (part 0 fixed)."""
    C = graph.C
    for perms in itertools.product(itertools.permutations(range(C)), repeat=graph.K - 1):
        slots = [tuple(range(C))] + list(perms)
        yield Partition(tuple(
            frozenset(V(k, slots[k][c]) for k in range(graph.K)) for c in range(C)
        ))


def replay_greedy(graph):
    """Greedy mapping by exhaustive search over one-vertex-per-part cliques."""
    remaining = [list(range(size)) for size in graph.part_sizes]
    cliques = []
    while any(remaining):
        best = max(
            itertools.product(*remaining),
            key=lambda members: sum(
                graph.weight(V(k, members[k]), V(l, members[l]))
                for k, l in itertools.combinations(range(graph.K), 2)
            ),
        )
        cliques.append(frozenset(V(k, i) for k, i in enumerate(best)))
        for k, i in enumerate(best):
            remaining[k].remove(i)
    return Partition(tuple(cliques))


def uniform_graph(part_sizes, weight):
    graph = random_graph(part_sizes, np.random.default_rng(0))
    w = np.where(graph.weight_matrix > 0, weight, 0.0)
    return MappingGraph(graph.parts, w, graph.dummy_flags)


class TestGreedyMapping:

    def test_clique_counts(self):
        assert count_maximal_cliques([2, 2, 2]) == 8
        assert count_maximal_cliques([1, 1, 1]) == 1
        assert count_maximal_cliques([3, 3, 3, 3]) == 81

    def test_enumeration_matches_count(self):
        graph = random_graph([2, 2, 2], np.random.default_rng(0))
        cliques = list(enumerate_maximal_cliques(graph))
        assert len(set(cliques)) == 8
        assert all(len({v.part for v in c}) == 3 for c in cliques)

    def test_enumeration_budget(self):
        graph = random_graph([2, 2, 2], np.random.default_rng(0))
        with pytest.raises(CliqueBudgetExceeded) as excinfo:
            next(enumerate_maximal_cliques(graph, budget=7))
        assert (excinfo.value.needed, excinfo.value.budget) == (8, 7)

    def test_budget_covers_every_round(self):
        graph = random_graph([2, 2, 2], np.random.default_rng(0))
        with pytest.raises(CliqueBudgetExceeded):
            map_labels_greedy(graph, budget=8)
        assert len(map_labels_greedy(graph, budget=9)) == 2

    def test_greedy_trap(self, greedy_trap_graph):
        partition = map_labels_greedy(greedy_trap_graph)
        assert partition_weight(greedy_trap_graph, partition) == pytest.approx(0.6)

    def test_equal_weights(self):
        graph = uniform_graph([2, 2, 2], 0.3)
        assert partition_weight(graph, map_labels_greedy(graph)) == pytest.approx(1.8)

    def test_matches_hand_replay(self):
        rng = np.random.default_rng(42)
        for _ in range(30):
            graph = random_graph([3, 3, 3], rng)
            assert map_labels_greedy(graph) == replay_greedy(graph)

    def test_incomplete_graph_drops_dummies(self):
        graph = random_graph([3, 1, 2], np.random.default_rng(4))
        partition = map_labels_greedy(graph)
        assert partition.vertices() == frozenset(graph.vertices())

    def test_clique_work(self):
        assert greedy_clique_work([4] * 10) == 1_108_650
        assert greedy_clique_work([4] * 11) > 4 ** 11


class TestMergeHypotheses:

    def test_mapped_speaker_is_unioned(self, make_hypothesis):
        h1 = make_hypothesis({"A": [(0, 4)]})
        h2 = make_hypothesis({"X": [(2, 6)], "Y": [(8, 10)]})
        merged = merge_hypotheses(h1, h2, {"X": "A"})
        assert merged == make_hypothesis({"A": [(0, 6)], "Y": [(8, 10)]})

    def test_fresh_label_avoids_clash(self, make_hypothesis):
        running = make_hypothesis({"A": [(0, 1)], "Y": [(2, 3)]})
        incoming = make_hypothesis({"Y": [(5, 6)]})
        assert complete_local_map(running, incoming, {}) == {"Y": "Y~0"}

    def test_non_injective_map(self, make_hypothesis):
        h1 = make_hypothesis({"A": [(0, 4)]})
        h2 = make_hypothesis({"X": [(0, 2)], "Y": [(2, 4)]})
        with pytest.raises(ValueError, match="injective"):
            merge_hypotheses(h1, h2, {"X": "A", "Y": "A"})

    def test_unknown_speaker(self, make_hypothesis):
        h1 = make_hypothesis({"A": [(0, 4)]})
        with pytest.raises(ValueError):
            merge_hypotheses(h1, h1, {"Q": "A"})


class TestSortByAverageDer:

    def test_orders_by_mean_der(self, make_hypothesis):
        h1 = make_hypothesis({"A": [(0, 10)]})
        h2 = make_hypothesis({"A": [(0, 10)]})
        h3 = make_hypothesis({"A": [(0, 5)], "B": [(5, 10)]})
        assert sort_by_avg_der([h3, h1, h2]) == [1, 2, 0]

    def test_two_hypotheses(self, make_hypothesis):
        full = make_hypothesis({"A": [(0, 10)]})
        half = make_hypothesis({"A": [(0, 5)]})
        assert sort_by_avg_der([full, half]) == [1, 0]

    def test_average_der_uses_other_references_only(self, make_hypothesis):
        full = make_hypothesis({"A": [(0, 10)]})
        half = make_hypothesis({"A": [(0, 5)]})
        assert average_der([full, half, Hypothesis("rec1")]) == pytest.approx([1.0, 0.5, 1.0])
        assert average_der([Hypothesis("rec1"), full]) == [1.0, float("inf")]
        assert sort_by_avg_der([Hypothesis("rec1"), full]) == [0, 1]

    def test_needs_two(self, make_hypothesis):
        with pytest.raises(ValueError):
            sort_by_avg_der([make_hypothesis({"A": [(0, 1)]})])


class TestPairwiseMapping:

    def test_identical_hypotheses_reach_total_weight(self, make_hypothesis):
        h = make_hypothesis({"A": [(0, 5)], "B": [(5, 10)]})
        graph = build_graph([h, h, h])
        partition = map_labels_pairwise([h, h, h])
        assert partition_weight(graph, partition) == pytest.approx(graph.total_weight) == pytest.approx(6.0)

    def test_beats_greedy_on_trap(self, greedy_trap_hypotheses):
        graph = build_graph(greedy_trap_hypotheses, "absolute")
        partition = map_labels_pairwise(greedy_trap_hypotheses, "absolute", sort=False)
        assert partition_weight(graph, partition) == pytest.approx(1.0)

    def test_union_versus_anchor(self, make_hypothesis):
        h1 = make_hypothesis({"A": [(0, 4)]})
        h2 = make_hypothesis({"X": [(0, 4)], "Y": [(6, 10)]})
        h3 = make_hypothesis({"P": [(6, 10)]})
        union = map_labels_pairwise([h1, h2, h3], sort=False, merge="union")
        anchor = map_labels_pairwise([h1, h2, h3], sort=False, merge="anchor")
        assert union == Partition((frozenset({V(0, 0), V(1, 0)}), frozenset({V(1, 1), V(2, 0)})))
        assert anchor == Partition((frozenset({V(0, 0), V(1, 0), V(2, 0)}), frozenset({V(1, 1)})))

    def test_unknown_merge_mode(self, make_hypothesis):
        h = make_hypothesis({"A": [(0, 4)]})
        with pytest.raises(ValueError):
            map_labels_pairwise([h, h], merge="vote")

    def test_graph_version_is_optimal_for_two_parts(self):
        rng = np.random.default_rng(42)
        for _ in range(100):
            sizes = [int(s) for s in rng.integers(1, 5, size=2)]
            graph = random_graph(sizes, rng)
            _, optimum = brute_force_optimum(graph)
            weight = partition_weight(graph, map_labels_pairwise_graph(graph))
            assert weight == pytest.approx(optimum, abs=1e-9)

    def test_graph_version_bound(self):
        rng = np.random.default_rng(42)
        for _ in range(200):
            K, C = int(rng.integers(2, 6)), int(rng.integers(2, 5))
            graph = random_graph([C] * K, rng)
            weight = partition_weight(graph, map_labels_pairwise_graph(graph))
            assert weight >= graph.total_weight / C - 1e-9

    def test_graph_version_rejects_bad_order(self):
        graph = random_graph([2, 2], np.random.default_rng(0))
        with pytest.raises(ValueError):
            map_labels_pairwise_graph(graph, order=[0, 0])


class TestRandomizedLocalSearch:

    def test_escapes_greedy_trap(self, greedy_trap_graph):
        partition = map_labels_rls(greedy_trap_graph)
        assert partition_weight(greedy_trap_graph, partition) == pytest.approx(1.0)

    def test_zero_graph_stops_after_one_epoch(self):
        graph = uniform_graph([3, 3], 0.0)
        result = run_rls(graph, RlsConfig(epochs=50))
        assert result.epochs_run == 1
        assert result.weight == 0.0
        assert partition_weight(graph, result.partition) == 0.0

    def test_seed_determinism_property(self):
        rng = np.random.default_rng(42)
        for case in range(1000):
            sizes = [int(s) for s in rng.integers(1, 4, size=int(rng.integers(2, 4)))]
            graph = random_graph(sizes, rng)
            config = RlsConfig(epochs=3, patience=3, seed=case)
            assert run_rls(graph, config) == run_rls(graph, config)

    def test_history_is_monotone(self):
        graph = random_graph([3, 3, 3, 3], np.random.default_rng(7))
        result = run_rls(graph, RlsConfig(epochs=30, patience=30))
        assert len(result.history) == result.epochs_run
        assert list(result.history) == sorted(result.history)
        assert result.weight == pytest.approx(result.history[-1])
        assert partition_weight(graph, result.partition) == pytest.approx(result.weight)

    @pytest.mark.parametrize("epochs, more_epochs", [(1, 5), (5, 40)])
    def test_more_epochs_never_lower_the_best_weight(self, epochs, more_epochs):
        rng = np.random.default_rng(42)
        for seed in range(30):
            graph = random_graph([int(s) for s in rng.integers(2, 5, size=4)], rng)
            short = run_rls(graph, RlsConfig(epochs=epochs, patience=epochs, seed=seed))
            longer = run_rls(graph, RlsConfig(epochs=more_epochs, patience=more_epochs, seed=seed))
            assert short.weight <= longer.weight + 1e-12
            assert list(longer.history[: len(short.history)]) == list(short.history)

    def test_never_above_optimum(self):
        rng = np.random.default_rng(3)
        for _ in range(20):
            graph = random_graph([3, 2, 3], rng)
            _, optimum = brute_force_optimum(graph)
            assert run_rls(graph, RlsConfig(epochs=20)).weight <= optimum + 1e-9

    def test_invalid_config(self):
        with pytest.raises(ValueError):
            RlsConfig(epochs=0)
        with pytest.raises(ValueError):
            RlsConfig(iterations=0)
        with pytest.raises(ValueError):
            RlsConfig(patience=0)


class TestExactOracles:

    def test_brute_force_on_trap(self, greedy_trap_graph):
        _, weight = brute_force_optimum(greedy_trap_graph)
        assert weight == pytest.approx(1.0)

    def test_brute_force_on_zero_graph(self):
        _, weight = brute_force_optimum(uniform_graph([2, 2, 2], 0.0))
        assert weight == 0.0

    def test_brute_force_matches_enumeration(self):
        rng = np.random.default_rng(42)
        for _ in range(20):
            graph = random_graph([3, 3, 3], rng)
            expected = max(partition_weight(graph, p) for p in all_partitions(graph))
            partition, weight = brute_force_optimum(graph)
            assert weight == pytest.approx(expected)
            assert partition_weight(graph, partition) == pytest.approx(weight)

    def test_brute_force_cap(self):
        graph = random_graph([4] * 6, np.random.default_rng(0))
        with pytest.raises(OracleTooLarge):
            brute_force_optimum(graph)

    def test_cpsat_agrees_with_brute_force(self):
        rng = np.random.default_rng(42)
        for _ in range(5):
            graph = random_graph([3, 2, 3], rng)
            result = solve_exact_cpsat(graph)
            assert "error" not in result
            assert result["optimal"]
            assert result["weight"] == pytest.approx(brute_force_optimum(graph)[1], abs=1e-4)


class TestDispatcher:

    def test_greedy_on_hypotheses(self, greedy_trap_hypotheses):
        partition, graph = map_labels(greedy_trap_hypotheses, method="greedy", weight_mode="absolute")
        assert partition_weight(graph, partition) == pytest.approx(0.6)

    def test_reuses_given_graph(self, greedy_trap_hypotheses, greedy_trap_graph):
        _, graph = map_labels(greedy_trap_hypotheses, method="rls", graph=greedy_trap_graph)
        assert graph is greedy_trap_graph

    def test_unknown_method(self, greedy_trap_hypotheses):
        with pytest.raises(ValueError):
            map_labels(greedy_trap_hypotheses, method="dover")
