"""
Command-line interface for consensus diarization.

Usage:
    python cli.py combine -i sys1.rttm sys2.rttm sys3.rttm -o combined.rttm --method pairwise
    python cli.py score -r ref.rttm -s combined.rttm
    python cli.py bench --mode approx --speakers 3 --max-k 3 --trials 200
    python cli.py generate --speakers 4 --hypotheses 3 --out-dir synth/
"""

import argparse
import logging
import sys
from typing import Dict, List, Optional, Sequence

from auto_config import CLI_CLIQUE_BUDGET, CombineOptions, combine_recording
from benchmark import BENCH_MODES, ORACLES, BenchParams, run_bench
from data_utils import NoiseParams, generate_ensemble, load_hypothesis_files, load_reference_file, write_ensemble
from der_scoring import compute_der, format_der_table
from export_utils import export_bench_csv, export_combined_rttm
from label_mapping import MAPPING_METHODS, MERGE_MODES, CliqueBudgetExceeded
from mapping_graph import WEIGHT_MODES, dump_edge_list
from rttm_utils import Hypothesis

logger = logging.getLogger("cli")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        description="Combine, score and benchmark speaker diarization hypotheses",
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog="""
Examples:
  python cli.py combine -i a.rttm b.rttm c.rttm -o out.rttm
  python cli.py combine -i a.rttm b.rttm -o out.rttm --method greedy --weight absolute
  python cli.py score -r ref.rttm -s out.rttm --collar 0.25
  python cli.py bench --mode timing --speakers 2 --max-k 6
        """
    )
    parser.add_argument('-v', '--verbose', action='store_true', help='Debug logging')
    sub = parser.add_subparsers(dest='command', required=True)

    combine = sub.add_parser('combine', help='Combine hypotheses into one consensus RTTM')
    combine.add_argument('-i', '--input', nargs='+', required=True, help='Hypothesis RTTM files (at least 2)')
    combine.add_argument('-o', '--output', required=True, help='Combined RTTM output path')
    combine.add_argument('--method', choices=MAPPING_METHODS + ("auto",), default='pairwise',
                         help='Label mapping method (default: pairwise)')
    combine.add_argument('--sort-by-der', dest='sort_by_der', action='store_true', default=True,
                         help='Order hypotheses by average DER before pairwise mapping (default)')
    combine.add_argument('--no-sort-by-der', dest='sort_by_der', action='store_false',
                         help='Keep the input order for pairwise mapping')
    combine.add_argument('--weight', choices=WEIGHT_MODES, default='relative', help='Edge weight (default: relative)')
    combine.add_argument('--merge', choices=MERGE_MODES, default='union', help='Pairwise merge mode (default: union)')
    combine.add_argument('--seed', type=int, default=0, help='Random seed (default: 0)')
    combine.add_argument('--rls-epochs', type=int, default=1000, help='RLS epochs N (default: 1000)')
    combine.add_argument('--rls-iters', type=int, default=None, help='RLS iterations per epoch M (default: 4*C*K)')
    combine.add_argument('--patience', type=int, default=100, help='RLS epochs without improvement (default: 100)')
    combine.add_argument('--clique-budget', type=int, default=CLI_CLIQUE_BUDGET,
                         help=f'Greedy clique enumeration budget (default: {CLI_CLIQUE_BUDGET})')
    combine.add_argument('--auto-fallback', action='store_true',
                         help='Fall back to pairwise mapping when greedy exceeds its budget')
    combine.add_argument('--rank-weighting', action='store_true', help='Weight votes by 1/rank of average DER')
    combine.add_argument('--dump-graph', default=None, help='Write the edge list of every recording to this path')

    score = sub.add_parser('score', help='Score a system RTTM against a reference')
    score.add_argument('-r', '--reference', required=True, help='Reference RTTM')
    score.add_argument('-s', '--system', required=True, help='System RTTM')
    score.add_argument('--collar', type=float, default=0.0, help='Forgiveness collar in seconds (default: 0)')

    bench = sub.add_parser('bench', help='Run a benchmark and write CSV to standard output')
    bench.add_argument('--mode', choices=BENCH_MODES, required=True)
    bench.add_argument('--speakers', type=int, default=4, help='Speakers per hypothesis C (default: 4)')
    bench.add_argument('--max-k', type=int, default=8, help='Largest number of hypotheses K (default: 8)')
    bench.add_argument('--trials', type=int, default=50, help='Trials (default: 50)')
    bench.add_argument('--seed', type=int, default=0, help='Random seed (default: 0)')
    bench.add_argument('--method', choices=MAPPING_METHODS, default='pairwise',
                       help='Mapper for weight_vs_der (default: pairwise)')
    bench.add_argument('--clique-budget', type=int, default=CLI_CLIQUE_BUDGET, help='Greedy clique budget')
    bench.add_argument('--oracle', choices=ORACLES, default='brute', help='Exact solver for approx (default: brute)')
    bench.add_argument('--repeats', type=int, default=5, help='Timing repetitions per point (default: 5)')

    generate = sub.add_parser('generate', help='Write a synthetic reference and K noisy hypotheses')
    generate.add_argument('--speakers', type=int, default=4, help='Reference speakers C (default: 4)')
    generate.add_argument('--hypotheses', type=int, default=3, help='Hypotheses K (default: 3)')
    generate.add_argument('--seed', type=int, default=0, help='Random seed (default: 0)')
    generate.add_argument('--out-dir', required=True, help='Output directory')
    generate.add_argument('--duration', type=float, default=60.0, help='Recording length in seconds (default: 60)')
    generate.add_argument('--recording-id', default='synth', help='Recording id (default: synth)')
    generate.add_argument('--jitter', type=float, default=0.0, help='Boundary jitter std-dev in seconds')
    generate.add_argument('--deletion', type=float, default=0.0, help='Turn deletion probability')
    generate.add_argument('--insertion', type=float, default=0.0, help='Spurious turn probability')
    generate.add_argument('--confusion', type=float, default=0.0, help='Speaker confusion probability')

    return parser


def cmd_combine(args: argparse.Namespace) -> int:
    try:
        options = CombineOptions(
            method=args.method,
            sort_by_der=args.sort_by_der,
            weight_mode=args.weight,
            merge=args.merge,
            seed=args.seed,
            rls_epochs=args.rls_epochs,
            rls_iterations=args.rls_iters,
            patience=args.patience,
            clique_budget=args.clique_budget,
            rank_weighting=args.rank_weighting,
            auto_fallback=args.auto_fallback,
        )
    except ValueError as e:
        logger.error("Error in options: %s", e)
        return 1

    recordings, error = load_hypothesis_files(args.input)
    if error:
        logger.error("Error loading hypotheses: %s", error)
        return 1
    logger.info("Loaded %d files covering %d recordings", len(args.input), len(recordings))

    combined: Dict[str, Hypothesis] = {}
    edge_lists: List[str] = []
    for recording_id, hypotheses in recordings.items():
        try:
            result = combine_recording(hypotheses, options)
        except CliqueBudgetExceeded as e:
            logger.error(
                "Error combining %s: %s. Rerun with --auto-fallback (or --method pairwise) to use pairwise mapping.",
                recording_id, e,
            )
            return 1
        except ValueError as e:
            logger.error("Error combining %s: %s", recording_id, e)
            return 1
        combined[recording_id] = result["combined"]
        if args.dump_graph:
            edge_lists.append(f"# {recording_id}\n" + dump_edge_list(result["graph"]))

    try:
        export_combined_rttm(combined, args.output)
        if args.dump_graph:
            with open(args.dump_graph, "w", encoding="utf-8") as handle:
                handle.write("".join(edge_lists))
    except OSError as e:
        logger.error("Error writing output: %s", e)
        return 1
    logger.info("Combined RTTM written to %s", args.output)
    return 0


def cmd_score(args: argparse.Namespace) -> int:
    reference, error = load_reference_file(args.reference)
    if error:
        logger.error("Error loading reference: %s", error)
        return 1
    system, error = load_reference_file(args.system)
    if error:
        logger.error("Error loading system output: %s", error)
        return 1
    if not reference:
        logger.error("Error scoring: reference %s contains no speech", args.reference)
        return 1
    for recording_id in sorted(set(system) - set(reference)):
        logger.warning("System recording %s has no reference and is not scored", recording_id)

    rows = []
    try:
        for recording_id, ref in reference.items():
            hyp = system.get(recording_id, Hypothesis(recording_id))
            rows.append((recording_id, compute_der(ref, hyp, collar=args.collar)))
    except ValueError as e:
        logger.error("Error scoring: %s", e)
        return 1

    sys.stdout.write(format_der_table(rows))
    return 0


def cmd_bench(args: argparse.Namespace) -> int:
    try:
        params = BenchParams(
            speakers=args.speakers,
            max_k=args.max_k,
            trials=args.trials,
            seed=args.seed,
            repeats=args.repeats,
            method=args.method,
            clique_budget=args.clique_budget,
            oracle=args.oracle,
        )
    except ValueError as e:
        logger.error("Error in options: %s", e)
        return 1

    rows, columns, footers = run_bench(args.mode, params)
    sys.stdout.write(export_bench_csv(rows, columns, footers))
    return 0


def cmd_generate(args: argparse.Namespace) -> int:
    try:
        noise = NoiseParams(
            jitter=args.jitter, deletion=args.deletion, insertion=args.insertion, confusion=args.confusion
        )
        reference, hypotheses = generate_ensemble(
            args.speakers, args.hypotheses, noise, seed=args.seed,
            duration=args.duration, recording_id=args.recording_id,
        )
        paths = write_ensemble(reference, hypotheses, args.out_dir)
    except ValueError as e:
        logger.error("Error generating ensemble: %s", e)
        return 1
    except OSError as e:
        logger.error("Error writing ensemble: %s", e)
        return 1
    logger.info("Wrote %d files to %s", len(paths), args.out_dir)
    return 0


COMMANDS = {
    'combine': cmd_combine,
    'score': cmd_score,
    'bench': cmd_bench,
    'generate': cmd_generate,
}


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
        force=True,
    )
    return COMMANDS[args.command](args)


if __name__ == "__main__":
    sys.exit(main())
