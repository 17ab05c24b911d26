"""Tighten interval operator bounds with a known relation A v = g.

Each entry only shares a constraint with the other entries of its row, so the
smallest and largest admissible value of a_ij have a closed form:

    lower: max(a^l_ij, (g_i - sum_{k != j} a^u_ik v_k) / v_j)
    upper: min(a^u_ij, (g_i - sum_{k != j} a^l_ik v_k) / v_j)
"""

from __future__ import annotations

import logging

import numpy as np

from .errors import InfeasibleRowError, ParameterError, ShapeMismatchError
from .lp import LinearProgram, solve_lp
from .models import SIDE_CONSTRAINT_TOL, IntervalOperator, as_grid

logger = logging.getLogger(__name__)

DIRECTIONS = ("min", "max")


def _side_vectors(op: IntervalOperator, v, g) -> tuple[np.ndarray, np.ndarray]:
    v = as_grid(v).vector()
    g = as_grid(g).vector()
    m, n = op.shape
    if v.size != n or g.size != m:
        raise ShapeMismatchError(f"Expected v with {n} and g with {m} entries, got {v.size} and {g.size}")
    if np.any(v < 0):
        raise ParameterError("v must be non-negative")
    return v, g


def check_rows(op: IntervalOperator, v: np.ndarray, g: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Return (A^l v, A^u v); raise for the first row with A^l v <= g <= A^u v violated."""
    low = op.lower @ v
    high = op.upper @ v
    slack = SIDE_CONSTRAINT_TOL * (1.0 + np.abs(g))
    bad = np.flatnonzero((low > g + slack) | (g > high + slack))
    if bad.size:
        row = int(bad[0])
        raise InfeasibleRowError(
            row, f"Row {row}: A^l v = {low[row]:.6g}, g = {g[row]:.6g}, A^u v = {high[row]:.6g}"
        )
    return low, high


def tighten_bounds(op: IntervalOperator, v, g) -> IntervalOperator:
    """Shrink [A^l, A^u] to the bounding box of {A in the box : A v = g}.

    Entries in columns with v_j = 0 are not constrained by the relation and
    keep their bounds.
    """
    v, g = _side_vectors(op, v, g)
    low_sum, high_sum = check_rows(op, v, g)

    rows = np.repeat(np.arange(op.shape[0]), np.diff(op.lower.indptr))
    cols = op.lower.indices
    a_l = op.lower.data
    a_u = op.upper.data
    vj = v[cols]
    constrained = vj > 0

    new_l = a_l.copy()
    new_u = a_u.copy()
    vc = vj[constrained]
    rc = rows[constrained]
    new_l[constrained] = np.maximum(
        a_l[constrained], (g[rc] - (high_sum[rc] - a_u[constrained] * vc)) / vc
    )
    new_u[constrained] = np.minimum(
        a_u[constrained], (g[rc] - (low_sum[rc] - a_l[constrained] * vc)) / vc
    )
    # round-off can leave new_l a few ulps above new_u on nearly tight rows
    new_l = np.minimum(new_l, new_u)

    lower = op.lower.copy()
    upper = op.upper.copy()
    lower.data = new_l
    upper.data = new_u
    tightened = int(np.count_nonzero((new_l > a_l) | (new_u < a_u)))
    logger.debug("Tightened %d of %d stored entries", tightened, a_l.size)
    return IntervalOperator(lower, upper)


def lp_tighten_oracle(op: IntervalOperator, v, g, i: int, j: int, direction: str) -> float:
    """Extreme value of a_ij over the row polytope, solved with the simplex oracle."""
    if direction not in DIRECTIONS:
        raise ParameterError(f"direction must be one of {DIRECTIONS}, got '{direction}'")
    v, g = _side_vectors(op, v, g)
    start, end = op.lower.indptr[i], op.lower.indptr[i + 1]
    cols = op.lower.indices[start:end]
    a_l = op.lower.data[start:end]
    a_u = op.upper.data[start:end]

    position = np.flatnonzero(cols == j)
    if position.size == 0:
        # Entries outside the pattern are fixed at zero
        slack = SIDE_CONSTRAINT_TOL * (1.0 + abs(g[i]))
        if a_l @ v[cols] > g[i] + slack or g[i] > a_u @ v[cols] + slack:
            raise InfeasibleRowError(i)
        return 0.0

    c = np.zeros(cols.size)
    c[position[0]] = 1.0 if direction == "min" else -1.0
    result = solve_lp(LinearProgram(c, A_eq=v[cols][None, :], b_eq=[g[i]], lower=a_l, upper=a_u))
    if result.infeasible:
        raise InfeasibleRowError(i)
    return float(result.x[position[0]])
