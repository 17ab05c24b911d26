"""Dense two-phase simplex for the small LPs used as correctness oracles.

Programs are stated with equality rows, optional ``<=`` rows and per-variable
bounds, then rewritten in standard form ``min c.z  s.t.  A z = b, z >= 0``.
Pivoting follows Bland's rule. Infeasible programs return a Farkas
certificate ``y`` for the standard form: ``A^T y >= 0`` and ``b.y < 0``.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .errors import LPError

logger = logging.getLogger(__name__)

PIVOT_TOL = 1e-10
FEASIBILITY_TOL = 1e-9
DEFAULT_MAX_ITERATIONS = 10_000

OPTIMAL = "optimal"
INFEASIBLE = "infeasible"
UNBOUNDED = "unbounded"


@dataclass(eq=False)
class LinearProgram:
    """min c.x  s.t.  A_eq x = b_eq,  A_ub x <= b_ub,  lower <= x <= upper.

    Bounds default to ``x >= 0``; infinite entries are allowed.
    """

    c: np.ndarray
    A_eq: np.ndarray | None = None
    b_eq: np.ndarray | None = None
    A_ub: np.ndarray | None = None
    b_ub: np.ndarray | None = None
    lower: np.ndarray | None = None
    upper: np.ndarray | None = None

    def __post_init__(self) -> None:
        self.c = np.asarray(self.c, dtype=np.float64).ravel()
        n = self.c.size
        if n == 0:
            raise LPError("Linear program has no variables")
        self.A_eq, self.b_eq = self._rows(self.A_eq, self.b_eq, n, "equality")
        self.A_ub, self.b_ub = self._rows(self.A_ub, self.b_ub, n, "inequality")
        self.lower = np.zeros(n) if self.lower is None else np.asarray(self.lower, dtype=np.float64).ravel()
        self.upper = np.full(n, np.inf) if self.upper is None else np.asarray(self.upper, dtype=np.float64).ravel()
        if self.lower.size != n or self.upper.size != n:
            raise LPError(f"Bounds must have {n} entries")
        if np.any(self.lower == np.inf) or np.any(self.upper == -np.inf):
            raise LPError("Lower bounds must be < +inf and upper bounds > -inf")
        if np.any(self.lower > self.upper):
            raise LPError("A variable has lower bound above its upper bound")
        if not np.all(np.isfinite(self.c)):
            raise LPError("Objective contains non-finite entries")

    @staticmethod
    def _rows(A, b, n: int, kind: str) -> tuple[np.ndarray, np.ndarray]:
        if A is None:
            return np.zeros((0, n)), np.zeros(0)
        A = np.atleast_2d(np.asarray(A, dtype=np.float64))
        b = np.asarray(b, dtype=np.float64).ravel()
        if A.shape[1] != n:
            raise LPError(f"{kind} matrix has {A.shape[1]} columns, expected {n}")
        if A.shape[0] != b.size:
            raise LPError(f"{kind} matrix has {A.shape[0]} rows but rhs has {b.size} entries")
        if not (np.all(np.isfinite(A)) and np.all(np.isfinite(b))):
            raise LPError(f"{kind} constraints contain non-finite entries")
        return A, b

    @property
    def n_variables(self) -> int:
        return self.c.size


@dataclass(eq=False)
class LPResult:
    """Outcome of ``solve_lp``.

    ``standard_A``/``standard_b`` are the standard-form data that a returned
    certificate refers to.
    """

    status: str
    x: np.ndarray | None = None
    value: float | None = None
    certificate: np.ndarray | None = None
    iterations: int = 0
    standard_A: np.ndarray | None = None
    standard_b: np.ndarray | None = None

    @property
    def optimal(self) -> bool:
        return self.status == OPTIMAL

    @property
    def infeasible(self) -> bool:
        return self.status == INFEASIBLE


@dataclass(eq=False)
class StandardForm:
    """``x = offset + transform @ z[:k]`` with ``A z = b``, ``z >= 0``."""

    A: np.ndarray
    b: np.ndarray
    c: np.ndarray
    transform: np.ndarray
    offset: np.ndarray
    constant: float


def to_standard_form(lp: LinearProgram) -> StandardForm:
    """Shift, reflect and split variables so every column is ``>= 0``."""
    n = lp.n_variables
    columns: list[tuple[int, float]] = []  # (original index, sign)
    offset = np.zeros(n)
    upper_rows: list[tuple[int, float]] = []  # (column, width)

    for j in range(n):
        lo, hi = lp.lower[j], lp.upper[j]
        if np.isfinite(lo):
            offset[j] = lo
            columns.append((j, 1.0))
            if np.isfinite(hi):
                upper_rows.append((len(columns) - 1, hi - lo))
        elif np.isfinite(hi):
            offset[j] = hi
            columns.append((j, -1.0))
        else:
            columns.append((j, 1.0))
            columns.append((j, -1.0))

    k = len(columns)
    transform = np.zeros((n, k))
    for col, (j, sign) in enumerate(columns):
        transform[j, col] = sign

    m_eq, m_ub, m_bd = lp.A_eq.shape[0], lp.A_ub.shape[0], len(upper_rows)
    width = k + m_bd + m_ub
    A = np.zeros((m_eq + m_ub + m_bd, width))
    b = np.zeros(m_eq + m_ub + m_bd)

    A[:m_eq, :k] = lp.A_eq @ transform
    b[:m_eq] = lp.b_eq - lp.A_eq @ offset

    rows = slice(m_eq, m_eq + m_ub)
    A[rows, :k] = lp.A_ub @ transform
    A[rows, k + m_bd:] = np.eye(m_ub)
    b[rows] = lp.b_ub - lp.A_ub @ offset

    for r, (col, span) in enumerate(upper_rows):
        row = m_eq + m_ub + r
        A[row, col] = 1.0
        A[row, k + r] = 1.0
        b[row] = span

    c = np.zeros(width)
    c[:k] = transform.T @ lp.c
    return StandardForm(A, b, c, transform, offset, float(lp.c @ offset))


def _pivot(T: np.ndarray, row: int, col: int) -> None:
    T[row, :] /= T[row, col]
    for r in range(T.shape[0]):
        if r != row and T[r, col] != 0.0:
            T[r, :] -= T[r, col] * T[row, :]


def _entering(T: np.ndarray, n_cols: int) -> int:
    """Bland: lowest index with negative reduced cost."""
    candidates = np.flatnonzero(T[-1, :n_cols] < -PIVOT_TOL)
    return int(candidates[0]) if candidates.size else -1


def _leaving(T: np.ndarray, col: int, basis: list[int]) -> int:
    """Minimum ratio; ties go to the row whose basic variable has the lowest index."""
    column = T[:-1, col]
    rows = np.flatnonzero(column > PIVOT_TOL)
    if rows.size == 0:
        return -1
    ratios = T[rows, -1] / column[rows]
    best = ratios.min()
    tied = rows[ratios <= best + PIVOT_TOL * max(1.0, abs(best))]
    return int(min(tied, key=lambda r: basis[r]))


def _run_simplex(T: np.ndarray, basis: list[int], n_cols: int, max_iterations: int) -> tuple[str, int]:
    for iteration in range(max_iterations):
        col = _entering(T, n_cols)
        if col < 0:
            return OPTIMAL, iteration
        row = _leaving(T, col, basis)
        if row < 0:
            return UNBOUNDED, iteration
        _pivot(T, row, col)
        basis[row] = col
    raise LPError(f"Simplex did not terminate within {max_iterations} iterations")


def verify_certificate(A: np.ndarray, b: np.ndarray, y: np.ndarray, tol: float = FEASIBILITY_TOL) -> bool:
    """Check ``A^T y >= 0`` and ``b.y < 0`` with a scale-aware tolerance."""
    scale = 1.0 + np.abs(A).max(initial=0.0) * np.abs(y).max(initial=0.0)
    return bool(np.all(A.T @ y >= -tol * scale) and b @ y < 0)


def solve_lp(lp: LinearProgram, max_iterations: int = DEFAULT_MAX_ITERATIONS) -> LPResult:
    """Solve a linear program with the two-phase simplex method."""
    sf = to_standard_form(lp)
    A, b = sf.A, sf.b
    m, n_cols = A.shape

    if m == 0:
        if np.any(sf.c < -PIVOT_TOL):
            return LPResult(UNBOUNDED, standard_A=A, standard_b=b)
        z = np.zeros(n_cols)
        return _optimal(lp, sf, z, 0)

    # Phase 1: artificial basis on rows flipped to b >= 0
    signs = np.where(b < 0, -1.0, 1.0)
    T = np.zeros((m + 1, n_cols + m + 1))
    T[:m, :n_cols] = A * signs[:, None]
    T[:m, n_cols:n_cols + m] = np.eye(m)
    T[:m, -1] = b * signs
    T[-1, :n_cols] = -T[:m, :n_cols].sum(axis=0)
    T[-1, -1] = -T[:m, -1].sum()
    basis = list(range(n_cols, n_cols + m))

    _, iters1 = _run_simplex(T, basis, n_cols + m, max_iterations)
    infeasibility = -T[-1, -1]
    logger.debug("Phase 1 finished after %d pivots, residual %.3e", iters1, infeasibility)

    if infeasibility > FEASIBILITY_TOL * (1.0 + np.abs(b).max()):
        # Duals of the phase-1 problem: pi_i = 1 - reduced cost of artificial i
        y = -(1.0 - T[-1, n_cols:n_cols + m]) * signs
        certificate = y if verify_certificate(A, b, y) else None
        if certificate is None:
            logger.warning("Phase-1 dual failed certificate verification; returning none")
        return LPResult(INFEASIBLE, certificate=certificate, iterations=iters1, standard_A=A, standard_b=b)

    # Drive remaining artificials out of the basis or drop their redundant rows
    for row in reversed(range(m)):
        if basis[row] < n_cols:
            continue
        cols = np.flatnonzero(np.abs(T[row, :n_cols]) > PIVOT_TOL)
        if cols.size:
            _pivot(T, row, int(cols[0]))
            basis[row] = int(cols[0])
        else:
            T = np.delete(T, row, axis=0)
            del basis[row]

    # Phase 2 on the structural columns
    T2 = np.hstack([T[:, :n_cols], T[:, -1:]])
    T2[-1, :] = 0.0
    T2[-1, :n_cols] = sf.c
    for row, var in enumerate(basis):
        if sf.c[var] != 0.0:
            T2[-1, :] -= sf.c[var] * T2[row, :]

    status, iters2 = _run_simplex(T2, basis, n_cols, max_iterations)
    iterations = iters1 + iters2
    if status == UNBOUNDED:
        return LPResult(UNBOUNDED, iterations=iterations, standard_A=A, standard_b=b)

    z = np.zeros(n_cols)
    for row, var in enumerate(basis):
        z[var] = T2[row, -1]
    logger.debug("Phase 2 finished after %d pivots", iters2)
    return _optimal(lp, sf, z, iterations)


def _optimal(lp: LinearProgram, sf: StandardForm, z: np.ndarray, iterations: int) -> LPResult:
    k = sf.transform.shape[1]
    x = sf.offset + sf.transform @ z[:k]
    # Snap round-off back inside finite bounds
    x = np.clip(x, lp.lower, lp.upper)
    return LPResult(
        OPTIMAL,
        x=x,
        value=float(lp.c @ x),
        iterations=iterations,
        standard_A=sf.A,
        standard_b=sf.b,
    )


def is_feasible(lp: LinearProgram) -> bool:
    """Phase-1 feasibility of ``lp`` (objective ignored)."""
    zero = LinearProgram(
        np.zeros(lp.n_variables), lp.A_eq, lp.b_eq, lp.A_ub, lp.b_ub, lp.lower, lp.upper
    )
    return solve_lp(zero).status != INFEASIBLE
