"""
Data utilities for consensus diarization

Handles hypothesis file loading and validation, and synthetic ensemble
generation (a random reference plus noisy, relabeled system outputs).
"""

import logging
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from rttm_utils import Hypothesis, RttmParseError, SpeakerTurn, load_rttm, write_rttm

logger = logging.getLogger(__name__)

MIN_TURN_MS = 10


@dataclass(frozen=True)
class NoiseParams:
    """
    Corruption applied to each synthetic system output.

    jitter: std-dev (seconds) of the Gaussian shift of every turn boundary
    deletion: probability of dropping a reference turn
    insertion: probability, per reference turn, of adding a spurious turn
    confusion: probability of attributing a turn to another speaker
    """

    jitter: float = 0.0
    deletion: float = 0.0
    insertion: float = 0.0
    confusion: float = 0.0

    def __post_init__(self):
        if self.jitter < 0:
            raise ValueError(f"jitter must be >= 0, got {self.jitter}")
        for name in ("deletion", "insertion", "confusion"):
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                raise ValueError(f"{name} must be in [0, 1], got {value}")

    def scaled(self, factor: float) -> "NoiseParams":
        """Same noise profile with every component multiplied by `factor` (probabilities capped at 1)."""
        if factor < 0:
            raise ValueError(f"Scale factor must be >= 0, got {factor}")
        return replace(
            self,
            jitter=self.jitter * factor,
            deletion=min(1.0, self.deletion * factor),
            insertion=min(1.0, self.insertion * factor),
            confusion=min(1.0, self.confusion * factor),
        )


def generate_reference(
    n_speakers: int,
    duration: float,
    rng: np.random.Generator,
    recording_id: str = "synth",
) -> Hypothesis:
    """
    Random reference diarization with naturally overlapping speakers.

    Each speaker alternates exponential silences and turns on its own, so
    speakers overlap wherever their turns happen to coincide.

    Args:
        n_speakers: C, number of reference speakers
        duration: Recording length in seconds
        rng: Random generator
        recording_id: Recording id of the result

    Returns:
        Normalized Hypothesis with exactly C speakers
    """
    if n_speakers < 1:
        raise ValueError(f"Need at least 1 speaker, got {n_speakers}")
    duration_ms = int(round(duration * 1000))
    if duration_ms < n_speakers * 1000:
        raise ValueError(f"Duration {duration}s is too short for {n_speakers} speakers")

    mean_gap = 1.5 * n_speakers
    turns: List[SpeakerTurn] = []
    for j in range(n_speakers):
        speaker = f"spk{j}"
        t = int(rng.exponential(mean_gap) * 1000)
        spoke = False
        while t < duration_ms:
            length = int((0.3 + rng.exponential(2.0)) * 1000)
            end = min(duration_ms, t + length)
            if end - t >= MIN_TURN_MS:
                turns.append(SpeakerTurn(t, speaker, end - t, recording_id))
                spoke = True
            t = end + int(rng.exponential(mean_gap) * 1000)
        if not spoke:
            # Every speaker gets at least one turn
            start = int(rng.integers(0, duration_ms - 1000))
            turns.append(SpeakerTurn(start, speaker, 1000, recording_id))
    return Hypothesis.from_turns(recording_id, turns)


def corrupt_hypothesis(
    reference: Hypothesis,
    noise: NoiseParams,
    rng: np.random.Generator,
    label_prefix: str,
) -> Hypothesis:
    """
    Noisy copy of `reference` with permuted, renamed speaker labels.

    Labels become f"{label_prefix}{n}" under a random permutation. The result
    always keeps at least one turn.
    """
    speakers = reference.speakers
    permutation = rng.permutation(len(speakers))
    rename = {speaker: f"{label_prefix}{permutation[j]}" for j, speaker in enumerate(speakers)}
    labels = list(rename.values())
    end_ms = reference.end_ms
    rec = reference.recording_id

    turns: List[SpeakerTurn] = []
    for turn in reference.turns:
        deleted = rng.random() < noise.deletion
        confused = rng.random() < noise.confusion
        inserted = rng.random() < noise.insertion
        shifts = rng.normal(0.0, noise.jitter, size=2) if noise.jitter > 0 else np.zeros(2)

        if not deleted:
            label = rename[turn.speaker]
            if confused and len(labels) > 1:
                others = [other for other in labels if other != label]
                label = others[int(rng.integers(len(others)))]
            start = max(0, turn.onset_ms + int(round(shifts[0] * 1000)))
            end = min(end_ms, turn.offset_ms + int(round(shifts[1] * 1000)))
            if end - start >= MIN_TURN_MS:
                turns.append(SpeakerTurn(start, label, end - start, rec))

        if inserted:
            length = int((0.2 + rng.exponential(1.0)) * 1000)
            start = int(rng.integers(0, max(1, end_ms - length)))
            label = labels[int(rng.integers(len(labels)))]
            turns.append(SpeakerTurn(start, label, length, rec))

    if not turns:
        first = reference.turns[0]
        turns.append(SpeakerTurn(first.onset_ms, rename[first.speaker], first.duration_ms, rec))
    return Hypothesis.from_turns(rec, turns)


def generate_ensemble(
    n_speakers: int,
    n_hypotheses: int,
    noise: Optional[NoiseParams] = None,
    seed: int = 0,
    duration: float = 60.0,
    recording_id: str = "synth",
) -> Tuple[Hypothesis, List[Hypothesis]]:
    """
    Generate a synthetic reference and K noisy system outputs.

    Deterministic for a given seed.

    Args:
        n_speakers: C >= 1
        n_hypotheses: K >= 2
        noise: Corruption profile (clean copies when omitted)
        seed: Random seed
        duration: Recording length in seconds
        recording_id: Recording id used for every output

    Returns:
        Tuple of (reference, hypotheses)
    """
    if n_hypotheses < 2:
        raise ValueError(f"Need at least 2 hypotheses, got {n_hypotheses}")
    noise = noise or NoiseParams()
    rng = np.random.default_rng(seed)
    reference = generate_reference(n_speakers, duration, rng, recording_id)
    hypotheses = [corrupt_hypothesis(reference, noise, rng, f"sys{k + 1}_") for k in range(n_hypotheses)]
    logger.debug(
        "Generated ensemble seed=%d C=%d K=%d with %d reference turns",
        seed, n_speakers, n_hypotheses, len(reference.turns),
    )
    return reference, hypotheses


def write_ensemble(
    reference: Hypothesis,
    hypotheses: Sequence[Hypothesis],
    out_dir: Union[str, Path],
) -> List[Path]:
    """Write ref.rttm and hyp_1.rttm ... hyp_K.rttm into `out_dir`; returns the written paths."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    targets = [("ref.rttm", reference)] + [(f"hyp_{k + 1}.rttm", h) for k, h in enumerate(hypotheses)]
    for name, hypothesis in targets:
        path = out_dir / name
        path.write_text(write_rttm(hypothesis), encoding="utf-8")
        written.append(path)
    return written


def load_hypothesis_files(
    paths: Sequence[Union[str, Path]],
) -> Tuple[Optional[Dict[str, List[Hypothesis]]], Optional[str]]:
    """
    Load system output files and group them by recording.

    Args:
        paths: At least two RTTM files

    Returns:
        Tuple of (recording id -> one Hypothesis per file in input order, error message if any)
    """
    if len(paths) < 2:
        return None, "At least 2 hypothesis files are required"

    loaded: List[Dict[str, Hypothesis]] = []
    for path in paths:
        try:
            recordings = load_rttm(path)
        except RttmParseError as e:
            return None, str(e)
        except OSError as e:
            return None, f"Cannot read {path}: {e.strerror or e}"
        if not recordings:
            return None, f"{path} contains no SPEAKER records"
        loaded.append(recordings)

    expected = set(loaded[0])
    for path, recordings in zip(paths[1:], loaded[1:]):
        if set(recordings) != expected:
            missing = sorted(expected - set(recordings))
            extra = sorted(set(recordings) - expected)
            return None, f"{path} does not cover the same recordings as {paths[0]} (missing {missing}, extra {extra})"

    grouped = {rec: [recordings[rec] for recordings in loaded] for rec in sorted(expected)}
    return grouped, None


def load_reference_file(path: Union[str, Path]) -> Tuple[Optional[Dict[str, Hypothesis]], Optional[str]]:
    """Load a single RTTM file, returning (recordings, error message if any)."""
    try:
        recordings = load_rttm(path)
    except RttmParseError as e:
        return None, str(e)
    except OSError as e:
        return None, f"Cannot read {path}: {e.strerror or e}"
    return recordings, None
