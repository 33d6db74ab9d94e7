"""End-to-end checks of mapper quality, scaling and ensemble behavior on synthetic data."""

import numpy as np
import pytest
from scipy import stats

from auto_config import CombineOptions, combine_recording
from benchmark import BenchParams, median_time_ms, run_weight_vs_der
from data_utils import NoiseParams, generate_ensemble
from der_scoring import compute_der
from label_mapping import (
    RlsConfig,
    brute_force_optimum,
    count_maximal_cliques,
    enumerate_maximal_cliques,
    map_labels_greedy,
    map_labels_pairwise_graph,
    run_rls,
)
from mapping_graph import partition_weight, random_graph

MODERATE_NOISE = NoiseParams(jitter=0.3, deletion=0.1, insertion=0.1, confusion=0.1)
SUITE_SEEDS = range(100)
LINEAR_SLACK = 3.0


@pytest.fixture(scope="module")
def ensemble_suite():
    """Per seed: reference, single-system DERs and per-method combine results (K=3, C=4)."""
    suite = []
    for seed in SUITE_SEEDS:
        reference, hyps = generate_ensemble(4, 3, MODERATE_NOISE, seed=seed, duration=30.0)
        entry = {
            "single_der": [compute_der(reference, h).der for h in hyps],
            "weight": {},
            "der": {},
        }
        for method in ("greedy", "pairwise", "rls"):
            result = combine_recording(hyps, CombineOptions(method=method, seed=seed))
            entry["weight"][method] = result["weight"]
            entry["der"][method] = compute_der(reference, result["combined"]).der
        unsorted = combine_recording(hyps, CombineOptions(method="pairwise", sort_by_der=False))
        entry["der"]["pairwise_unsorted"] = compute_der(reference, unsorted["combined"]).der
        suite.append(entry)
    return suite


class TestScaling:

    @pytest.mark.parametrize("K", range(2, 9))
    def test_maximal_clique_count(self, K):
        graph = random_graph([4] * K, np.random.default_rng(K))
        assert count_maximal_cliques(graph.part_sizes) == 4 ** K
        assert sum(1 for _ in enumerate_maximal_cliques(graph)) == 4 ** K

    @pytest.mark.slow
    def test_greedy_time_explodes_while_pairwise_grows_linearly(self):
        """
        Greedy time grows exponentially in K while pairwise time grows at most
        linearly: pairwise makes K-1 Hungarian merges, so its K=8 over K=2 ratio
        is held to a linear bound with timing slack and must stay below
        greedy's K=8 over K=6 ratio.
        """
        rng = np.random.default_rng(0)
        graphs = {K: random_graph([4] * K, rng) for K in (2, 6, 7, 8)}
        greedy = {K: median_time_ms(lambda g=graphs[K]: map_labels_greedy(g), 5) for K in (6, 7, 8)}
        pairwise = {K: median_time_ms(lambda g=graphs[K]: map_labels_pairwise_graph(g), 5) for K in (2, 8)}

        assert greedy[6] < greedy[7] < greedy[8]
        assert greedy[8] >= 3 * greedy[6]
        assert pairwise[8] / pairwise[2] <= LINEAR_SLACK * 8 / 2
        assert pairwise[8] / pairwise[2] < greedy[8] / greedy[6]


class TestApproximationBounds:

    def test_pairwise_keeps_a_c_th_of_the_total_weight(self):
        rng = np.random.default_rng(42)
        violations = 0
        for _ in range(500):
            K, C = int(rng.integers(2, 6)), int(rng.integers(2, 5))
            graph = random_graph([C] * K, rng)
            weight = partition_weight(graph, map_labels_pairwise_graph(graph))
            violations += weight < graph.total_weight / C - 1e-9
        assert violations == 0

    def test_pairwise_is_optimal_on_two_hypotheses(self):
        rng = np.random.default_rng(42)
        for _ in range(500):
            sizes = [int(s) for s in rng.integers(1, 6, size=2)]
            graph = random_graph(sizes, rng)
            _, optimum = brute_force_optimum(graph)
            assert partition_weight(graph, map_labels_pairwise_graph(graph)) == pytest.approx(optimum, abs=1e-9)

    @pytest.mark.slow
    def test_rls_is_near_optimal_with_high_probability(self):
        rng = np.random.default_rng(42)
        hits = 0
        n_instances = 200
        for trial in range(n_instances):
            graph = random_graph([3] * 4, rng)
            _, optimum = brute_force_optimum(graph)
            result = run_rls(graph, RlsConfig(epochs=200, patience=200, seed=trial))
            hits += result.weight >= 0.95 * optimum
        assert hits / n_instances >= 0.63


@pytest.mark.slow
class TestEnsembleQuality:

    def test_rls_weight_at_least_pairwise(self, ensemble_suite):
        rls = np.mean([e["weight"]["rls"] for e in ensemble_suite])
        pairwise = np.mean([e["weight"]["pairwise"] for e in ensemble_suite])
        assert rls >= pairwise - 1e-9

    @pytest.mark.parametrize("method", ["greedy", "pairwise", "rls"])
    def test_combination_beats_single_systems(self, ensemble_suite, method):
        combined = np.mean([e["der"][method] for e in ensemble_suite])
        single = np.mean([np.mean(e["single_der"]) for e in ensemble_suite])
        assert combined <= single

    def test_sorting_by_der_does_not_hurt(self, ensemble_suite):
        sorted_der = np.array([e["der"]["pairwise"] for e in ensemble_suite])
        unsorted_der = np.array([e["der"]["pairwise_unsorted"] for e in ensemble_suite])
        assert sorted_der.mean() <= unsorted_der.mean() + 0.01

        worse = int(np.sum(sorted_der > unsorted_der + 1e-12))
        better = int(np.sum(sorted_der < unsorted_der - 1e-12))
        if worse + better:
            p_worse = stats.binomtest(worse, worse + better, 0.5, alternative="greater").pvalue
            assert p_worse >= 0.05

    def test_weight_tracks_der(self):
        rows, _, footers = run_weight_vs_der(BenchParams(speakers=4, max_k=3, trials=50))
        assert len(rows) == 50
        assert footers["spearman"] <= -0.5

    def test_jitter_only_ensembles(self):
        wins = 0
        for seed in range(100):
            reference, hyps = generate_ensemble(3, 3, NoiseParams(jitter=0.4), seed=seed, duration=30.0)
            combined = combine_recording(hyps)["combined"]
            wins += compute_der(reference, combined).der <= max(compute_der(reference, h).der for h in hyps)
        assert wins >= 90
