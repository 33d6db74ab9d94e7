"""
Benchmark module for label mapping

Three studies, each returning rows for CSV export:

- timing: median mapping time per method as the number of hypotheses grows
- weight_vs_der: partition weight against combined DER on noisy ensembles
- approx: mapper weights against an exact optimum on random graphs
"""

import logging
import math
import time
from dataclasses import dataclass
from typing import Callable, Dict, List, Optional, Tuple

import numpy as np
from scipy import stats

from auto_config import CLI_CLIQUE_BUDGET, CombineOptions, combine_recording
from data_utils import NoiseParams, corrupt_hypothesis, generate_ensemble, generate_reference
from der_scoring import compute_der
from label_mapping import (
    DEFAULT_ORACLE_CAP,
    MAPPING_METHODS,
    CliqueBudgetExceeded,
    OracleTooLarge,
    RlsConfig,
    brute_force_optimum,
    map_labels,
    map_labels_greedy,
    map_labels_pairwise_graph,
    run_rls,
    solve_exact_cpsat,
)
from mapping_graph import MappingGraph, build_graph, partition_weight, random_graph

logger = logging.getLogger(__name__)

BENCH_MODES = ("timing", "weight_vs_der", "approx")
ORACLES = ("brute", "cpsat")

TIMING_COLUMNS = ("K", "method", "median_ms")
WEIGHT_DER_COLUMNS = ("trial", "weight", "der")
APPROX_COLUMNS = ("trial", "w_pairwise", "w_rls", "w_greedy", "w_opt", "w_G")

# Noise at scale 1.0; weight_vs_der draws a scale in [0, 1) per trial
BASE_NOISE = NoiseParams(jitter=0.5, deletion=0.25, insertion=0.25, confusion=0.35)
TIMING_NOISE = NoiseParams(jitter=0.2, deletion=0.1, insertion=0.1, confusion=0.1)

BenchResult = Tuple[List[Dict], Tuple[str, ...], Dict[str, object]]


@dataclass(frozen=True)
class BenchParams:
    """Shared benchmark parameters."""

    speakers: int = 4
    max_k: int = 8
    trials: int = 50
    seed: int = 0
    repeats: int = 5
    method: str = "pairwise"
    clique_budget: int = CLI_CLIQUE_BUDGET
    oracle: str = "brute"
    oracle_cap: int = DEFAULT_ORACLE_CAP
    duration: float = 60.0

    def __post_init__(self):
        if self.speakers < 1:
            raise ValueError(f"speakers must be >= 1, got {self.speakers}")
        if self.max_k < 2:
            raise ValueError(f"max_k must be >= 2, got {self.max_k}")
        if self.trials < 1:
            raise ValueError(f"trials must be >= 1, got {self.trials}")
        if self.repeats < 5:
            raise ValueError(f"repeats must be >= 5, got {self.repeats}")
        if self.method not in MAPPING_METHODS:
            raise ValueError(f"Unknown method '{self.method}'")
        if self.oracle not in ORACLES:
            raise ValueError(f"Unknown oracle '{self.oracle}'")


def median_time_ms(func: Callable[[], object], repeats: int) -> float:
    """Median wall time of `func` over `repeats` runs, after one untimed warm-up run."""
    func()
    samples = []
    for _ in range(repeats):
        started = time.perf_counter()
        func()
        samples.append((time.perf_counter() - started) * 1000.0)
    return float(np.median(samples))


def run_timing(params: BenchParams) -> BenchResult:
    """
    Mapping time per method for K = 2 .. max_k on one synthetic ensemble per K.

    Only the mapping is timed; the pairwise ordering by average DER is left out
    of the timed call. Greedy is dropped for the remaining K once its clique
    budget is exceeded.
    """
    rows: List[Dict] = []
    greedy_feasible = True
    for K in range(2, params.max_k + 1):
        _, hypotheses = generate_ensemble(
            params.speakers, K, TIMING_NOISE, seed=params.seed + K, duration=params.duration
        )
        graph = build_graph(hypotheses)
        rls_config = RlsConfig(seed=params.seed)
        for method in MAPPING_METHODS:
            if method == "greedy" and not greedy_feasible:
                continue

            def run(method: str = method) -> None:
                map_labels(
                    hypotheses,
                    method,
                    sort_by_der=False,
                    rls_config=rls_config,
                    clique_budget=params.clique_budget,
                    graph=graph,
                )

            try:
                median_ms = median_time_ms(run, params.repeats)
            except CliqueBudgetExceeded as e:
                logger.warning("Skipping greedy from K=%d on: %s", K, e)
                greedy_feasible = False
                continue
            rows.append({"K": K, "method": method, "median_ms": median_ms})
            logger.debug("K=%d %s: %.3f ms", K, method, median_ms)
    return rows, TIMING_COLUMNS, {}


def spearman(x: List[float], y: List[float]) -> float:
    """Spearman rank correlation (NaN when either series is constant or too short)."""
    if len(x) < 2 or len(set(x)) < 2 or len(set(y)) < 2:
        return float("nan")
    rho, _ = stats.spearmanr(x, y)
    return float(rho)


def run_weight_vs_der(params: BenchParams) -> BenchResult:
    """
    Partition weight w(Phi) against the DER of the combined output.

    One synthetic reference is drawn; every trial draws a noise scale in
    [0, 1), corrupts max_k copies of the reference at that scale and combines
    them with `params.method`.
    """
    rng = np.random.default_rng(params.seed)
    reference = generate_reference(params.speakers, params.duration, rng)
    options = CombineOptions(method=params.method, seed=params.seed, clique_budget=params.clique_budget)
    rows: List[Dict] = []
    for trial in range(params.trials):
        noise = BASE_NOISE.scaled(float(rng.uniform(0.0, 1.0)))
        hypotheses = [
            corrupt_hypothesis(reference, noise, rng, f"sys{k + 1}_") for k in range(params.max_k)
        ]
        try:
            result = combine_recording(hypotheses, options)
        except CliqueBudgetExceeded as e:
            logger.warning("Skipping trial %d: %s", trial, e)
            continue
        der = compute_der(reference, result["combined"]).der
        rows.append({"trial": trial, "weight": result["weight"], "der": der})

    rho = spearman([r["weight"] for r in rows], [r["der"] for r in rows])
    return rows, WEIGHT_DER_COLUMNS, {"spearman": rho}


def exact_optimum(graph: MappingGraph, params: BenchParams) -> Optional[float]:
    """Optimal partition weight from the configured oracle, or None if it cannot solve the instance."""
    if params.oracle == "brute":
        try:
            return brute_force_optimum(graph, params.oracle_cap)[1]
        except OracleTooLarge as e:
            logger.warning("Oracle skipped instance: %s", e)
            return None
    result = solve_exact_cpsat(graph)
    if "error" in result:
        logger.warning("Oracle skipped instance: %s", result["error"])
        return None
    if not result["optimal"]:
        logger.warning("CP-SAT hit its time limit; skipping instance")
        return None
    return result["weight"]


def run_approx(params: BenchParams) -> BenchResult:
    """
    Pairwise, RLS and greedy weights against the exact optimum on random
    complete graphs with K = max_k parts of C = speakers vertices.
    """
    rng = np.random.default_rng(params.seed)
    part_sizes = [params.speakers] * params.max_k
    rows: List[Dict] = []
    for trial in range(params.trials):
        graph = random_graph(part_sizes, rng)
        w_opt = exact_optimum(graph, params)
        if w_opt is None:
            continue
        w_pairwise = partition_weight(graph, map_labels_pairwise_graph(graph))
        w_rls = run_rls(graph, RlsConfig(seed=params.seed + trial)).weight
        try:
            w_greedy = partition_weight(graph, map_labels_greedy(graph, params.clique_budget))
        except CliqueBudgetExceeded as e:
            logger.warning("Greedy skipped on trial %d: %s", trial, e)
            w_greedy = float("nan")
        rows.append({
            "trial": trial,
            "w_pairwise": w_pairwise,
            "w_rls": w_rls,
            "w_greedy": w_greedy,
            "w_opt": w_opt,
            "w_G": graph.total_weight,
        })

    ratios = [r["w_pairwise"] / r["w_opt"] for r in rows if r["w_opt"] > 0]
    near = [r["w_rls"] >= 0.95 * r["w_opt"] for r in rows]
    footers = {
        "min_pairwise_over_opt": min(ratios) if ratios else float("nan"),
        "rls_within_5pct": sum(near) / len(near) if near else float("nan"),
    }
    return rows, APPROX_COLUMNS, footers


def run_bench(mode: str, params: BenchParams) -> BenchResult:
    """Dispatch to one benchmark mode."""
    runners = {"timing": run_timing, "weight_vs_der": run_weight_vs_der, "approx": run_approx}
    if mode not in runners:
        raise ValueError(f"Unknown bench mode '{mode}', expected one of {BENCH_MODES}")
    rows, columns, footers = runners[mode](params)
    if not rows:
        logger.warning("Benchmark '%s' produced no rows", mode)
    for key, value in footers.items():
        if isinstance(value, float) and math.isnan(value):
            logger.warning("Footer %s is undefined for this run", key)
    return rows, columns, footers
