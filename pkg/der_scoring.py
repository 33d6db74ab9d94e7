"""
DER scoring module for diarization hypotheses

Computes the diarization error rate of a hypothesis against a reference with
an optimal one-to-one speaker map, optional forgiveness collar and a
per-recording summary table.
"""

import logging
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from hungarian import hungarian_assign
from mapping_graph import weight_matrix_between
from rttm_utils import Hypothesis, IntervalSet, sweep_activity

logger = logging.getLogger(__name__)

_SCORED = ("scored", None)


@dataclass(frozen=True)
class DerReport:
    """DER components in seconds."""

    missed_speech: float
    false_alarm: float
    speaker_error: float
    total_reference_speech: float

    @property
    def missed_ratio(self) -> float:
        return self.missed_speech / self.total_reference_speech

    @property
    def false_alarm_ratio(self) -> float:
        return self.false_alarm / self.total_reference_speech

    @property
    def speaker_error_ratio(self) -> float:
        return self.speaker_error / self.total_reference_speech

    @property
    def der(self) -> float:
        return (self.missed_speech + self.false_alarm + self.speaker_error) / self.total_reference_speech

    def __add__(self, other: "DerReport") -> "DerReport":
        return DerReport(
            self.missed_speech + other.missed_speech,
            self.false_alarm + other.false_alarm,
            self.speaker_error + other.speaker_error,
            self.total_reference_speech + other.total_reference_speech,
        )


def optimal_speaker_map(
    reference: Hypothesis, hypothesis: Hypothesis, within: Optional[IntervalSet] = None
) -> Dict[str, str]:
    """
    One-to-one map hypothesis speaker -> reference speaker maximizing total overlap.

    Overlap is counted inside `within` only, when given. Pairs with zero
    overlap are left unmapped.
    """
    ref_speakers = reference.speakers
    hyp_speakers = hypothesis.speakers
    if not ref_speakers or not hyp_speakers:
        return {}

    ref_activity = reference.speaker_intervals()
    hyp_activity = hypothesis.speaker_intervals()
    if within is not None:
        ref_activity = {s: iv & within for s, iv in ref_activity.items()}
        hyp_activity = {s: iv & within for s, iv in hyp_activity.items()}
    overlap = weight_matrix_between(
        [ref_activity[s] for s in ref_speakers],
        [hyp_activity[s] for s in hyp_speakers],
        "absolute",
    )
    assignment = hungarian_assign(overlap)
    return {
        hyp_speakers[col]: ref_speakers[row]
        for row, col in assignment.items()
        if overlap[row, col] > 0
    }


def _no_score_zone(reference: Hypothesis, collar_ms: int) -> IntervalSet:
    pairs = []
    for intervals in reference.speaker_intervals().values():
        for start, end in intervals:
            for boundary in (start, end):
                pairs.append((max(0, boundary - collar_ms), boundary + collar_ms))
    return IntervalSet.from_pairs(pairs)


def compute_der(reference: Hypothesis, hypothesis: Hypothesis, collar: float = 0.0) -> DerReport:
    """
    Score a hypothesis against a reference.

    Args:
        reference: Ground-truth diarization (must contain speech)
        hypothesis: System output for the same recording
        collar: Seconds excluded from scoring on each side of every reference
            turn boundary

    Returns:
        DerReport with missed speech, false alarm and speaker error

    Raises:
        ValueError: on an empty reference, a recording mismatch or a negative collar
    """
    if reference.recording_id != hypothesis.recording_id:
        raise ValueError(
            f"Recording mismatch: reference '{reference.recording_id}' vs hypothesis '{hypothesis.recording_id}'"
        )
    if collar < 0:
        raise ValueError(f"Collar must be >= 0, got {collar}")

    activity = {("ref", s): iv for s, iv in reference.speaker_intervals().items()}
    activity.update({("hyp", s): iv for s, iv in hypothesis.speaker_intervals().items()})
    collar_ms = int(round(collar * 1000))
    scored: Optional[IntervalSet] = None
    if collar_ms > 0:
        end = max(reference.end_ms, hypothesis.end_ms)
        scored = _no_score_zone(reference, collar_ms).complement_within(0, end)
        activity[_SCORED] = scored

    # the map only sees speech that is actually scored
    speaker_map = optimal_speaker_map(reference, hypothesis, within=scored)

    missed = false_alarm = confusion = total = 0
    for lo, hi, active in sweep_activity(activity):
        if collar_ms > 0 and _SCORED not in active:
            continue
        duration = hi - lo
        ref_active = {s for side, s in active if side == "ref"}
        hyp_active = [s for side, s in active if side == "hyp"]
        n_ref, n_hyp = len(ref_active), len(hyp_active)
        n_correct = sum(1 for s in hyp_active if speaker_map.get(s) in ref_active)
        total += duration * n_ref
        missed += duration * max(0, n_ref - n_hyp)
        false_alarm += duration * max(0, n_hyp - n_ref)
        confusion += duration * (min(n_ref, n_hyp) - n_correct)

    if total == 0:
        raise ValueError(f"Reference for '{reference.recording_id}' has no scored speech")

    report = DerReport(missed / 1000.0, false_alarm / 1000.0, confusion / 1000.0, total / 1000.0)
    logger.debug("DER %s: %.4f (map %s)", reference.recording_id, report.der, speaker_map)
    return report


def average_der_matrix(hypotheses: Sequence[Hypothesis]) -> np.ndarray:
    """
    Pairwise DER matrix; entry (i, j) scores hypothesis j against hypothesis i.

    Hypotheses without speech cannot act as reference: their row is NaN
    (the diagonal is always 0 for non-empty hypotheses).
    """
    n = len(hypotheses)
    matrix = np.zeros((n, n))
    for i, ref in enumerate(hypotheses):
        if not ref.turns:
            matrix[i, :] = np.nan
            continue
        for j, hyp in enumerate(hypotheses):
            if i != j:
                matrix[i, j] = compute_der(ref, hyp).der
    return matrix


def format_der_table(rows: Sequence[Tuple[str, DerReport]], overall: Optional[DerReport] = None) -> str:
    """
    Fixed-width table of MS, FA, SE and DER percentages (2 decimals).

    An OVERALL row (time-weighted over all rows, or `overall` if given) is
    appended when more than one recording is listed.
    """
    width = max([len("recording"), len("OVERALL")] + [len(name) for name, _ in rows])
    lines: List[str] = [f"{'recording':<{width}}  {'MS':>7}  {'FA':>7}  {'SE':>7}  {'DER':>7}"]

    def render(name: str, report: DerReport) -> str:
        return (
            f"{name:<{width}}  {100 * report.missed_ratio:7.2f}  {100 * report.false_alarm_ratio:7.2f}  "
            f"{100 * report.speaker_error_ratio:7.2f}  {100 * report.der:7.2f}"
        )

    for name, report in rows:
        lines.append(render(name, report))
    if overall is None and len(rows) > 1:
        overall = rows[0][1]
        for _, report in rows[1:]:
            overall = overall + report
    if overall is not None:
        lines.append(render("OVERALL", overall))
    return "\n".join(lines) + "\n"
