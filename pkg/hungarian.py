"""
Maximum-weight assignment with a deterministic tie-break.

Wraps scipy's linear_sum_assignment; shared by label mapping and DER scoring.
"""

from typing import Dict

import numpy as np
from scipy.optimize import linear_sum_assignment


def assignment_value(matrix: np.ndarray) -> float:
    """Weight of a maximum-weight assignment (0 for an empty matrix)."""
    if matrix.size == 0:
        return 0.0
    rows, cols = linear_sum_assignment(matrix, maximize=True)
    return float(matrix[rows, cols].sum())


def hungarian_assign(weight_matrix) -> Dict[int, int]:
    """
    Maximum-weight injective assignment of rows to columns.

    Exactly min(n, m) pairs are returned. Among optimal assignments the
    lexicographically smallest is chosen: rows are fixed in order, each to the
    smallest column (an unassigned row ranks after every column) that still
    allows the optimum.

    Args:
        weight_matrix: n x m array of finite non-negative weights

    Returns:
        Dictionary row -> column
    """
    w = np.asarray(weight_matrix, dtype=float)
    if w.ndim != 2 or w.shape[0] < 1 or w.shape[1] < 1:
        raise ValueError(f"Weight matrix must be 2-D and non-empty, got shape {w.shape}")
    if not np.all(np.isfinite(w)):
        raise ValueError("Weight matrix must be finite")

    n, m = w.shape
    best = assignment_value(w)
    tolerance = 1e-9 * max(1.0, abs(best))
    target = min(n, m)

    assignment: Dict[int, int] = {}
    free_cols = list(range(m))
    fixed_value = 0.0
    for row in range(n):
        rows_after = n - row - 1
        placed = len(assignment)
        chosen = None
        for col in free_cols + [None]:
            remaining = [c for c in free_cols if c != col]
            if placed + (col is not None) + min(rows_after, len(remaining)) < target:
                continue
            value = fixed_value + (w[row, col] if col is not None else 0.0)
            value += assignment_value(w[row + 1:][:, remaining])
            if value >= best - tolerance:
                chosen = col
                break
        if chosen is not None:
            assignment[row] = chosen
            fixed_value += w[row, chosen]
            free_cols.remove(chosen)
    return assignment
