"""
RTTM utilities for consensus diarization

Holds the core value types (speaker turns, hypotheses, interval sets), the RTTM
text codec and the interval algebra used for edge weights and DER scoring.

All times are kept as integer milliseconds internally.
"""

import logging
from dataclasses import dataclass
from decimal import Decimal, DecimalException, ROUND_HALF_UP
from pathlib import Path
from typing import Callable, Dict, FrozenSet, Hashable, Iterable, Iterator, List, Mapping, Optional, Tuple, Union

logger = logging.getLogger(__name__)

RTTM_MIN_FIELDS = 9


class RttmParseError(ValueError):
    """Malformed RTTM line. Carries the 1-based line number and the source name."""

    def __init__(self, message: str, line_number: int, source: str = "<string>"):
        self.line_number = line_number
        self.source = source
        super().__init__(f"{source}:{line_number}: {message}")


def seconds_to_ms(value: Union[str, float, int, Decimal]) -> int:
    """
    Quantize a time in seconds to integer milliseconds (half-up rounding).

    Args:
        value: Seconds as text or number

    Returns:
        Milliseconds
    """
    quantized = (Decimal(str(value)) * 1000).to_integral_value(rounding=ROUND_HALF_UP)
    return int(quantized)


def ms_to_text(ms: int) -> str:
    """Render milliseconds as seconds with exactly 3 decimals."""
    sign = "-" if ms < 0 else ""
    ms = abs(ms)
    return f"{sign}{ms // 1000}.{ms % 1000:03d}"


@dataclass(frozen=True)
class IntervalSet:
    """Sorted, disjoint, half-open [start, end) intervals in milliseconds."""

    intervals: Tuple[Tuple[int, int], ...] = ()

    def __post_init__(self):
        previous_end = None
        for start, end in self.intervals:
            if end <= start:
                raise ValueError(f"Interval [{start}, {end}) is empty or reversed")
            if previous_end is not None and start < previous_end:
                raise ValueError("Intervals must be sorted and disjoint")
            previous_end = end

    @classmethod
    def from_pairs(cls, pairs: Iterable[Tuple[int, int]]) -> "IntervalSet":
        """Build a normalized set from arbitrary pairs; overlapping and adjacent pairs are merged."""
        merged: List[List[int]] = []
        for start, end in sorted((int(s), int(e)) for s, e in pairs if e > s):
            if merged and start <= merged[-1][1]:
                merged[-1][1] = max(merged[-1][1], end)
            else:
                merged.append([start, end])
        return cls(tuple((s, e) for s, e in merged))

    @property
    def total_ms(self) -> int:
        return sum(end - start for start, end in self.intervals)

    @property
    def total_duration(self) -> float:
        """Total covered time in seconds."""
        return self.total_ms / 1000.0

    def __len__(self) -> int:
        return len(self.intervals)

    def __iter__(self) -> Iterator[Tuple[int, int]]:
        return iter(self.intervals)

    def __and__(self, other: "IntervalSet") -> "IntervalSet":
        return intersect_intervals(self, other)

    def __or__(self, other: "IntervalSet") -> "IntervalSet":
        return union_intervals(self, other)

    def __sub__(self, other: "IntervalSet") -> "IntervalSet":
        return subtract_intervals(self, other)

    def complement_within(self, start: int, end: int) -> "IntervalSet":
        """Everything in [start, end) not covered by this set."""
        if end <= start:
            return IntervalSet()
        return subtract_intervals(IntervalSet(((start, end),)), self)


_INTERVAL_OPERATIONS: Dict[str, Callable[[bool, bool], bool]] = {
    "intersection": lambda in_a, in_b: in_a and in_b,
    "union": lambda in_a, in_b: in_a or in_b,
    "difference": lambda in_a, in_b: in_a and not in_b,
}


def interval_ops(a: IntervalSet, b: IntervalSet, operation: str) -> IntervalSet:
    """
    Combine two interval sets with an exact sweep over their boundary points.

    Args:
        a: Left operand
        b: Right operand
        operation: 'intersection', 'union' or 'difference' (a minus b)

    Returns:
        Normalized IntervalSet
    """
    keep = _INTERVAL_OPERATIONS.get(operation)
    if keep is None:
        raise ValueError(f"Unknown interval operation '{operation}'")

    points = sorted({p for interval in (a.intervals + b.intervals) for p in interval})
    result: List[List[int]] = []
    ia = ib = 0
    for lo, hi in zip(points, points[1:]):
        while ia < len(a.intervals) and a.intervals[ia][1] <= lo:
            ia += 1
        while ib < len(b.intervals) and b.intervals[ib][1] <= lo:
            ib += 1
        in_a = ia < len(a.intervals) and a.intervals[ia][0] <= lo
        in_b = ib < len(b.intervals) and b.intervals[ib][0] <= lo
        if not keep(in_a, in_b):
            continue
        if result and result[-1][1] == lo:
            result[-1][1] = hi
        else:
            result.append([lo, hi])
    return IntervalSet(tuple((s, e) for s, e in result))


def intersect_intervals(a: IntervalSet, b: IntervalSet) -> IntervalSet:
    return interval_ops(a, b, "intersection")


def union_intervals(a: IntervalSet, b: IntervalSet) -> IntervalSet:
    return interval_ops(a, b, "union")


def subtract_intervals(a: IntervalSet, b: IntervalSet) -> IntervalSet:
    return interval_ops(a, b, "difference")


@dataclass(frozen=True, order=True)
class SpeakerTurn:
    """One labeled speech interval of one hypothesis."""

    onset_ms: int
    speaker: str
    duration_ms: int
    recording_id: str

    def __post_init__(self):
        if self.onset_ms < 0:
            raise ValueError(f"Turn onset must be >= 0, got {self.onset_ms} ms")
        if self.duration_ms <= 0:
            raise ValueError(f"Turn duration must be > 0, got {self.duration_ms} ms")

    @property
    def offset_ms(self) -> int:
        return self.onset_ms + self.duration_ms

    @property
    def onset(self) -> float:
        return self.onset_ms / 1000.0

    @property
    def duration(self) -> float:
        return self.duration_ms / 1000.0


@dataclass(frozen=True)
class Hypothesis:
    """
    One system's output for one recording.

    Turns are kept sorted by (onset, speaker). Use `normalize()` (or
    `from_turns`) to merge overlapping/adjacent turns of the same speaker.
    """

    recording_id: str
    turns: Tuple[SpeakerTurn, ...] = ()

    def __post_init__(self):
        for turn in self.turns:
            if turn.recording_id != self.recording_id:
                raise ValueError(
                    f"Turn of recording '{turn.recording_id}' does not belong to '{self.recording_id}'"
                )
        object.__setattr__(self, "turns", tuple(sorted(self.turns)))

    @classmethod
    def from_turns(cls, recording_id: str, turns: Iterable[SpeakerTurn]) -> "Hypothesis":
        return cls(recording_id, tuple(turns)).normalize()

    @classmethod
    def from_intervals(cls, recording_id: str, speaker_intervals: Mapping[str, IntervalSet]) -> "Hypothesis":
        """Build a normalized hypothesis from per-speaker activity sets."""
        turns = [
            SpeakerTurn(start, speaker, end - start, recording_id)
            for speaker, intervals in speaker_intervals.items()
            for start, end in intervals
        ]
        return cls(recording_id, tuple(turns))

    @property
    def speakers(self) -> Tuple[str, ...]:
        """Distinct speaker labels, sorted."""
        return tuple(sorted({turn.speaker for turn in self.turns}))

    @property
    def end_ms(self) -> int:
        return max((turn.offset_ms for turn in self.turns), default=0)

    def speaker_intervals(self) -> Dict[str, IntervalSet]:
        pairs: Dict[str, List[Tuple[int, int]]] = {}
        for turn in self.turns:
            pairs.setdefault(turn.speaker, []).append((turn.onset_ms, turn.offset_ms))
        return {speaker: IntervalSet.from_pairs(p) for speaker, p in sorted(pairs.items())}

    def normalize(self) -> "Hypothesis":
        return Hypothesis.from_intervals(self.recording_id, self.speaker_intervals())

    def relabel(self, mapping: Mapping[str, str]) -> "Hypothesis":
        """Rename speakers (labels missing from `mapping` are kept) and renormalize."""
        turns = [
            SpeakerTurn(turn.onset_ms, mapping.get(turn.speaker, turn.speaker), turn.duration_ms, self.recording_id)
            for turn in self.turns
        ]
        return Hypothesis.from_turns(self.recording_id, turns)


def active_intervals(hypothesis: Hypothesis, speaker: str) -> IntervalSet:
    """
    Activity set of one speaker.

    Raises:
        ValueError: if the speaker does not occur in the hypothesis
    """
    pairs = [(t.onset_ms, t.offset_ms) for t in hypothesis.turns if t.speaker == speaker]
    if not pairs:
        raise ValueError(f"Speaker '{speaker}' not found in hypothesis for '{hypothesis.recording_id}'")
    return IntervalSet.from_pairs(pairs)


def parse_rttm(text: str, source: str = "<string>") -> Dict[str, Hypothesis]:
    """
    Parse RTTM text into one normalized Hypothesis per recording.

    Args:
        text: RTTM content
        source: Name used in error messages (usually the file path)

    Returns:
        Dictionary mapping recording id to Hypothesis (empty for empty input)

    Raises:
        RttmParseError: on a malformed SPEAKER line
    """
    turns_by_recording: Dict[str, List[SpeakerTurn]] = {}

    for line_number, raw_line in enumerate(text.splitlines(), start=1):
        line = raw_line.strip()
        if not line or line.startswith(";;"):
            continue

        fields = line.split()
        if len(fields) < RTTM_MIN_FIELDS:
            raise RttmParseError(
                f"expected at least {RTTM_MIN_FIELDS} fields, found {len(fields)}", line_number, source
            )
        if fields[0] != "SPEAKER":
            logger.debug("Skipping %s record at %s:%d", fields[0], source, line_number)
            continue

        recording_id, speaker = fields[1], fields[7]
        try:
            onset_ms = seconds_to_ms(fields[3])
            duration_ms = seconds_to_ms(fields[4])
        except (DecimalException, ValueError, OverflowError):
            raise RttmParseError(
                f"non-numeric onset/duration '{fields[3]}' '{fields[4]}'", line_number, source
            ) from None

        if Decimal(fields[4]) <= 0:
            raise RttmParseError(f"duration must be positive, got {fields[4]}", line_number, source)
        if onset_ms < 0:
            raise RttmParseError(f"onset must be non-negative, got {fields[3]}", line_number, source)
        if duration_ms == 0:
            logger.warning("Dropping turn shorter than 1 ms at %s:%d", source, line_number)
            continue

        turns_by_recording.setdefault(recording_id, []).append(
            SpeakerTurn(onset_ms, speaker, duration_ms, recording_id)
        )

    return {
        recording_id: Hypothesis.from_turns(recording_id, turns)
        for recording_id, turns in sorted(turns_by_recording.items())
    }


def load_rttm(path: Union[str, Path]) -> Dict[str, Hypothesis]:
    """Read and parse an RTTM file; parse errors name the path."""
    path = Path(path)
    return parse_rttm(path.read_text(encoding="utf-8"), source=str(path))


def format_rttm_line(turn: SpeakerTurn) -> str:
    return (
        f"SPEAKER {turn.recording_id} 1 {ms_to_text(turn.onset_ms)} {ms_to_text(turn.duration_ms)} "
        f"<NA> <NA> {turn.speaker} <NA> <NA>"
    )


def write_rttm(hypothesis: Optional[Hypothesis]) -> str:
    """
    Serialize a hypothesis, one SPEAKER line per turn sorted by (onset, speaker).

    The channel field is always written as "1".
    """
    if hypothesis is None or not hypothesis.turns:
        return ""
    lines = [format_rttm_line(turn) for turn in sorted(hypothesis.turns, key=lambda t: (t.onset_ms, t.speaker))]
    return "\n".join(lines) + "\n"


def sweep_activity(activity: Mapping[Hashable, IntervalSet]) -> Iterator[Tuple[int, int, FrozenSet[Hashable]]]:
    """
    Split the timeline at every interval boundary of every set.

    Yields (start_ms, end_ms, active keys) for each elementary region between
    consecutive boundaries, including regions where nothing is active.
    """
    points = sorted({p for intervals in activity.values() for interval in intervals for p in interval})
    pointers = {key: 0 for key in activity}
    for lo, hi in zip(points, points[1:]):
        active = []
        for key, intervals in activity.items():
            i = pointers[key]
            while i < len(intervals.intervals) and intervals.intervals[i][1] <= lo:
                i += 1
            pointers[key] = i
            if i < len(intervals.intervals) and intervals.intervals[i][0] <= lo:
                active.append(key)
        yield lo, hi, frozenset(active)
