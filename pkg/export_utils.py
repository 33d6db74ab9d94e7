"""
Export utilities for combined diarizations and benchmark tables.
"""

from pathlib import Path
from typing import Dict, List, Mapping, Optional, Sequence, Union

import pandas as pd

from rttm_utils import Hypothesis, write_rttm


def combined_rttm_text(combined: Mapping[str, Hypothesis]) -> str:
    """RTTM text for several recordings, ordered by recording id."""
    return "".join(write_rttm(combined[rec]) for rec in sorted(combined))


def export_combined_rttm(combined: Mapping[str, Hypothesis], path: Union[str, Path]) -> Path:
    """
    Write the combined hypotheses of all recordings to one RTTM file.

    Args:
        combined: Recording id -> consensus Hypothesis
        path: Output file

    Returns:
        The written path
    """
    path = Path(path)
    path.write_text(combined_rttm_text(combined), encoding="utf-8")
    return path


def bench_rows_to_dataframe(rows: List[Dict], columns: Sequence[str]) -> pd.DataFrame:
    """
    Build a DataFrame with the benchmark rows for CSV export.

    Args:
        rows: One dictionary per row
        columns: Column order of the table

    Returns:
        DataFrame with exactly `columns`
    """
    return pd.DataFrame(rows, columns=list(columns))


def export_bench_csv(
    rows: List[Dict],
    columns: Sequence[str],
    footers: Optional[Mapping[str, object]] = None,
) -> str:
    """
    CSV text (header row, comma separated) followed by `# key=value` footer lines.
    """
    frame = bench_rows_to_dataframe(rows, columns)
    csv = frame.to_csv(index=False, float_format="%.6f", lineterminator="\n")
    for key, value in (footers or {}).items():
        rendered = f"{value:.6f}" if isinstance(value, float) else str(value)
        csv += f"# {key}={rendered}\n"
    return csv
